"""Cone descriptions and the per-block operations the interior-point solver needs.

Cones are ordered products of three block kinds:

* ``zero``    -- {0}; rows are equalities, the dual block is free.
* ``nonneg``  -- componentwise nonnegative orthant.
* ``soc``     -- second-order cone {(t, u) : t >= ||u||_2}, first coordinate
  is the radius bound.

All blocks are self-dual except ``zero`` (its dual is the free cone), which
the solver treats separately anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"

_KINDS = (ZERO, NONNEG, SOC)


@dataclass(frozen=True)
class ConeBlock:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 0:
            raise ValueError("cone dimension must be nonnegative")
        if self.kind == SOC and self.dim < 1:
            raise ValueError("soc blocks need dim >= 1")


@dataclass(frozen=True)
class ConeSpec:
    blocks: tuple[ConeBlock, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(
            b if isinstance(b, ConeBlock) else ConeBlock(*b) for b in self.blocks
        ))

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    def slices(self):
        """Yield (block, slice) pairs in row order."""
        at = 0
        for b in self.blocks:
            yield b, slice(at, at + b.dim)
            at += b.dim

    def to_json_obj(self):
        return [{"kind": b.kind, "dim": b.dim} for b in self.blocks]

    @staticmethod
    def from_json_obj(obj) -> "ConeSpec":
        return ConeSpec(tuple(ConeBlock(d["kind"], int(d["dim"])) for d in obj))


def cone_project(spec: ConeSpec, v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto the cone product."""
    out = np.array(v, dtype=float)
    for b, sl in spec.slices():
        if b.kind == ZERO:
            out[sl] = 0.0
        elif b.kind == NONNEG:
            out[sl] = np.maximum(out[sl], 0.0)
        else:
            out[sl] = _soc_project(out[sl])
    return out


def dual_cone_project(spec: ConeSpec, v: np.ndarray) -> np.ndarray:
    """Projection onto the dual cone (zero blocks dualize to free)."""
    out = np.array(v, dtype=float)
    for b, sl in spec.slices():
        if b.kind == NONNEG:
            out[sl] = np.maximum(out[sl], 0.0)
        elif b.kind == SOC:
            out[sl] = _soc_project(out[sl])
    return out


def _soc_project(v: np.ndarray) -> np.ndarray:
    t, u = v[0], v[1:]
    nu = np.linalg.norm(u)
    if t >= nu:
        return v
    if t <= -nu:
        return np.zeros_like(v)
    a = 0.5 * (t + nu)
    out = np.empty_like(v)
    out[0] = a
    out[1:] = u * (a / nu)
    return out


def cone_violation(spec: ConeSpec, v: np.ndarray) -> float:
    """2-norm displacement from v to its projection onto the cone."""
    return float(np.linalg.norm(v - cone_project(spec, v)))


def dual_cone_violation(spec: ConeSpec, v: np.ndarray) -> float:
    return float(np.linalg.norm(v - dual_cone_project(spec, v)))


# ---------------------------------------------------------------------------
# Operations on the barrier part of the cone (nonneg and soc blocks only).
# The solver splits zero blocks off before using these; `blocks` below never
# contains zero blocks.
# ---------------------------------------------------------------------------


class BarrierCones:
    """Nonneg/soc block structure with Jordan-algebra helpers."""

    def __init__(self, blocks: list[ConeBlock]):
        assert all(b.kind in (NONNEG, SOC) for b in blocks)
        self.blocks = blocks
        self.dim = sum(b.dim for b in blocks)
        # barrier degree: 1 per nonneg coordinate, 1 per soc block
        self.degree = sum(b.dim if b.kind == NONNEG else 1 for b in blocks)
        self._slices = []
        at = 0
        for b in blocks:
            self._slices.append((b, slice(at, at + b.dim)))
            at += b.dim

    def slices(self):
        return self._slices

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        for b, sl in self._slices:
            if b.kind == NONNEG:
                e[sl] = 1.0
            else:
                e[sl.start] = 1.0
        return e

    def min_eig(self, v: np.ndarray) -> float:
        """Smallest spectral value; positive iff v is strictly interior."""
        if self.dim == 0:
            return np.inf
        m = np.inf
        for b, sl in self._slices:
            if b.kind == NONNEG:
                if b.dim:
                    m = min(m, float(np.min(v[sl])))
            else:
                t, u = v[sl.start], v[sl.start + 1:sl.stop]
                m = min(m, float(t - np.linalg.norm(u)))
        return m

    def product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product u o v blockwise."""
        out = np.empty(self.dim)
        for b, sl in self._slices:
            if b.kind == NONNEG:
                out[sl] = u[sl] * v[sl]
            else:
                u0, ub = u[sl.start], u[sl.start + 1:sl.stop]
                v0, vb = v[sl.start], v[sl.start + 1:sl.stop]
                out[sl.start] = u0 * v0 + ub @ vb
                out[sl.start + 1:sl.stop] = u0 * vb + v0 * ub
        return out

    def solve_product(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve lam o x = d for x (lam strictly interior)."""
        out = np.empty(self.dim)
        for b, sl in self._slices:
            if b.kind == NONNEG:
                out[sl] = d[sl] / lam[sl]
            else:
                l0, lb = lam[sl.start], lam[sl.start + 1:sl.stop]
                d0, db = d[sl.start], d[sl.start + 1:sl.stop]
                det = l0 * l0 - lb @ lb
                x0 = (l0 * d0 - lb @ db) / det
                out[sl.start] = x0
                out[sl.start + 1:sl.stop] = (db - x0 * lb) / l0
        return out

    def max_step(self, v: np.ndarray, dv: np.ndarray) -> float:
        """Largest alpha with v + alpha*dv still in the cone (v interior)."""
        alpha = np.inf
        for b, sl in self._slices:
            if b.kind == NONNEG:
                neg = dv[sl] < 0
                if np.any(neg):
                    alpha = min(alpha, float(np.min(-v[sl][neg] / dv[sl][neg])))
            else:
                alpha = min(alpha, _soc_max_step(v[sl], dv[sl]))
        return alpha

    def nt_scaling(self, s: np.ndarray, z: np.ndarray) -> "NTScaling":
        return NTScaling(self, s, z)


def _soc_max_step(v: np.ndarray, dv: np.ndarray) -> float:
    # feasible alphas solve (v0+a*dv0)^2 - ||vb+a*dvb||^2 >= 0, v0+a*dv0 >= 0
    v0, vb = v[0], v[1:]
    d0, db = dv[0], dv[1:]
    a = d0 * d0 - db @ db
    bq = 2.0 * (v0 * d0 - vb @ db)
    cq = v0 * v0 - vb @ vb  # > 0 strictly interior
    alpha = np.inf
    if d0 < 0:
        alpha = -v0 / d0
    if abs(a) < 1e-14:
        if bq < 0 and cq > 0:
            alpha = min(alpha, -cq / bq)
        return alpha
    disc = bq * bq - 4.0 * a * cq
    if disc >= 0:
        sq = np.sqrt(disc)
        for root in ((-bq - sq) / (2 * a), (-bq + sq) / (2 * a)):
            if root > 1e-16:
                alpha = min(alpha, root)
    return alpha


class NTScaling:
    """Nesterov-Todd scaling W with W z = W^{-T} s = lambda.

    For nonneg blocks W is diagonal.  For soc blocks W = beta * (2 v v^T - J)
    with J = diag(1, -I) and v the unit-hyperbolic vector halfway between the
    normalized s and z points.  Blocks are materialized as small dense
    matrices, adequate at the problem scale this solver targets.
    """

    def __init__(self, cones: BarrierCones, s: np.ndarray, z: np.ndarray):
        self.cones = cones
        self._diag = np.ones(cones.dim)   # used for nonneg entries
        self._soc_w: dict[int, np.ndarray] = {}
        self._soc_winv: dict[int, np.ndarray] = {}
        lam = np.empty(cones.dim)
        for idx, (b, sl) in enumerate(cones.slices()):
            if b.kind == NONNEG:
                w = np.sqrt(s[sl] / z[sl])
                self._diag[sl] = w
                lam[sl] = np.sqrt(s[sl] * z[sl])
            else:
                W, Winv = _soc_nt(s[sl], z[sl])
                self._soc_w[idx] = W
                self._soc_winv[idx] = Winv
                lam[sl] = W @ z[sl]
        self.lam = lam

    def apply(self, v: np.ndarray) -> np.ndarray:
        """W v."""
        out = self._diag * v
        for idx, (b, sl) in enumerate(self.cones.slices()):
            if b.kind == SOC:
                out[sl] = self._soc_w[idx] @ v[sl]
        return out

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        """W^{-1} v (W is symmetric, so this is also W^{-T} v)."""
        out = v / self._diag
        for idx, (b, sl) in enumerate(self.cones.slices()):
            if b.kind == SOC:
                out[sl] = self._soc_winv[idx] @ v[sl]
        return out

    def wtw_blocks_list(self):
        """W^T W values per block, diagonal arrays for nonneg, dense for soc."""
        out = []
        for idx, (b, sl) in enumerate(self.cones.slices()):
            if b.kind == NONNEG:
                out.append(self._diag[sl] ** 2)
            else:
                W = self._soc_w[idx]
                out.append(W @ W)
        return out


def _soc_nt(s: np.ndarray, z: np.ndarray):
    d = len(s)
    J = -np.eye(d)
    J[0, 0] = 1.0
    ns = np.sqrt(s[0] ** 2 - s[1:] @ s[1:])
    nz = np.sqrt(z[0] ** 2 - z[1:] @ z[1:])
    st = s / ns
    zt = z / nz
    gamma = np.sqrt((1.0 + st @ zt) / 2.0)
    wbar = (st + J @ zt) / (2.0 * gamma)
    v = wbar.copy()
    v[0] += 1.0
    v /= np.sqrt(2.0 * (wbar[0] + 1.0))
    H = 2.0 * np.outer(v, v) - J
    beta = np.sqrt(ns / nz)
    W = beta * H
    Winv = (J @ H @ J) / beta
    return W, Winv
