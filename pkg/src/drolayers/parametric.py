"""Cone programs whose data entries are differentiable functions of a parameter.

Entries are either plain floats, affine functions of the parameter vector
(const + sum of weight * theta_k), or a smooth unary function applied to an
affine form.  Every entry therefore carries an exact gradient, which is what
lets reformulated programs be chained through the cone-program
differentiation layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import ConeProgram, ConeSpec, ConeBlock
from .diff import DataCotangents, SolutionJacobianAction, ValueGradient


@dataclass(frozen=True)
class AffineScalar:
    """const + sum_k weight_k * theta_k."""

    const: float = 0.0
    lin: tuple[tuple[int, float], ...] = ()

    def value(self, theta: np.ndarray) -> float:
        return self.const + sum(w * theta[k] for k, w in self.lin if w != 0.0)

    def grad(self, theta: np.ndarray) -> dict[int, float]:
        return {k: w for k, w in self.lin if w != 0.0}

    @property
    def is_constant(self) -> bool:
        return all(w == 0.0 for _, w in self.lin)

    def __add__(self, other):
        other = as_entry(other)
        if isinstance(other, SmoothUnary):
            raise TypeError("cannot add unary-wrapped entries")
        terms: dict[int, float] = dict(self.lin)
        for k, w in other.lin:
            terms[k] = terms.get(k, 0.0) + w
        return AffineScalar(self.const + other.const, tuple(sorted(terms.items())))

    def __mul__(self, scalar: float):
        return AffineScalar(self.const * scalar,
                            tuple((k, w * scalar) for k, w in self.lin))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def theta_entry(index: int, weight: float = 1.0, const: float = 0.0) -> AffineScalar:
    return AffineScalar(const, ((index, weight),))


_UNARY = {
    "square": (lambda v: v * v, lambda v: 2.0 * v),
    "exp": (math.exp, math.exp),
    "softplus": (lambda v: math.log1p(math.exp(-abs(v))) + max(v, 0.0),
                 lambda v: 1.0 / (1.0 + math.exp(-v))),
}


@dataclass(frozen=True)
class SmoothUnary:
    """fn(inner(theta)) for a smooth named fn with a hand-coded derivative."""

    fn: str
    inner: AffineScalar

    def __post_init__(self):
        if self.fn not in _UNARY:
            raise ValueError(f"unknown unary {self.fn!r}; have {sorted(_UNARY)}")

    def value(self, theta: np.ndarray) -> float:
        return _UNARY[self.fn][0](self.inner.value(theta))

    def grad(self, theta: np.ndarray) -> dict[int, float]:
        d = _UNARY[self.fn][1](self.inner.value(theta))
        return {k: d * w for k, w in self.inner.lin if w != 0.0}

    @property
    def is_constant(self) -> bool:
        return self.inner.is_constant


Entry = float | AffineScalar | SmoothUnary


def as_entry(v) -> AffineScalar | SmoothUnary:
    if isinstance(v, (AffineScalar, SmoothUnary)):
        return v
    return AffineScalar(float(v))


def entry_value(v: Entry, theta: np.ndarray) -> float:
    if isinstance(v, (AffineScalar, SmoothUnary)):
        return v.value(theta)
    return float(v)


class LinExpr:
    """Affine expression over program variables with Entry-valued data."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict[int, Entry] | None = None, const: Entry = 0.0):
        self.coeffs: dict[int, Entry] = dict(coeffs or {})
        self.const: Entry = const

    @staticmethod
    def var(index: int, coef: Entry = 1.0) -> "LinExpr":
        return LinExpr({int(index): coef})

    @staticmethod
    def constant(value: Entry) -> "LinExpr":
        return LinExpr({}, value)

    def add_term(self, index: int, coef: Entry) -> "LinExpr":
        index = int(index)
        if index in self.coeffs:
            self.coeffs[index] = as_entry(self.coeffs[index]) + as_entry(coef)
        else:
            self.coeffs[index] = coef
        return self

    def __add__(self, other):
        if not isinstance(other, LinExpr):
            other = LinExpr.constant(other)
        out = LinExpr(dict(self.coeffs), self.const)
        for idx, coef in other.coeffs.items():
            out.add_term(idx, coef)
        out.const = as_entry(out.const) + as_entry(other.const)
        return out

    def __sub__(self, other):
        if not isinstance(other, LinExpr):
            other = LinExpr.constant(other)
        return self + other.scaled(-1.0)

    def scaled(self, scalar: float) -> "LinExpr":
        return LinExpr({i: as_entry(c) * scalar for i, c in self.coeffs.items()},
                       as_entry(self.const) * scalar)

    def __neg__(self):
        return self.scaled(-1.0)


class ProgramBuilder:
    """Assemble a parametric cone program from rows of affine expressions.

    Row semantics: a row holding expression e means e = 0 (zero), e >= 0
    (nonneg), or the stacked expression vector lies in a second-order cone
    (soc, first entry is the radius bound).
    """

    def __init__(self):
        self._nvars = 0
        self._groups: dict[str, np.ndarray] = {}
        self._rows: list[tuple[dict[int, Entry], Entry]] = []
        self._blocks: list[ConeBlock] = []
        self._objective = LinExpr()

    def add_vars(self, name: str, size: int) -> np.ndarray:
        if name in self._groups:
            raise ValueError(f"variable group {name!r} already exists")
        idx = np.arange(self._nvars, self._nvars + size)
        self._nvars += size
        self._groups[name] = idx
        return idx

    def group(self, name: str) -> np.ndarray:
        return self._groups[name]

    @property
    def num_vars(self) -> int:
        return self._nvars

    @property
    def num_rows(self) -> int:
        return len(self._rows)

    def _push(self, kind: str, exprs: list[LinExpr]):
        for e in exprs:
            self._rows.append((e.coeffs, e.const))
        self._blocks.append(ConeBlock(kind, len(exprs)))

    def add_zero(self, *exprs: LinExpr):
        self._push("zero", list(exprs))

    def add_nonneg(self, *exprs: LinExpr):
        self._push("nonneg", list(exprs))

    def add_soc(self, exprs: list[LinExpr]):
        if len(exprs) < 1:
            raise ValueError("soc block needs at least one row")
        self._push("soc", list(exprs))

    def set_objective(self, expr: LinExpr):
        self._objective = expr

    def build(self) -> "ParametricConeProgram":
        return ParametricConeProgram(self)


@dataclass
class _ParamSlot:
    kind: str       # "A", "b", or "c"
    pos: int        # flat triplet index for A, row for b, col for c
    entry: AffineScalar | SmoothUnary


class ParametricConeProgram:
    """Frozen program structure with theta-dependent entries and gradients."""

    def __init__(self, builder: ProgramBuilder):
        self.n = builder.num_vars
        self.m = builder.num_rows
        self.cones = ConeSpec(tuple(builder._blocks))
        self.groups = dict(builder._groups)

        rows, cols, base_vals = [], [], []
        b_base = np.zeros(self.m)
        c_base = np.zeros(self.n)
        self._slots: list[_ParamSlot] = []

        for i, (coeffs, const) in enumerate(builder._rows):
            ce = as_entry(const)
            if ce.is_constant:
                b_base[i] = _const_value(ce)
            else:
                b_base[i] = 0.0
                self._slots.append(_ParamSlot("b", i, ce))
            for j, coef in sorted(coeffs.items()):
                e = as_entry(coef)
                rows.append(i)
                cols.append(j)
                # A entry is the negated coefficient: rows read b - A w in K
                if e.is_constant:
                    base_vals.append(-_const_value(e))
                else:
                    base_vals.append(0.0)
                    self._slots.append(_ParamSlot("A", len(base_vals) - 1, _negate(e)))

        obj = builder._objective
        for j, coef in obj.coeffs.items():
            e = as_entry(coef)
            if e.is_constant:
                c_base[j] = _const_value(e)
            else:
                self._slots.append(_ParamSlot("c", j, e))
        self.objective_offset: AffineScalar | SmoothUnary = as_entry(obj.const)

        self._rows = np.array(rows, dtype=int)
        self._cols = np.array(cols, dtype=int)
        self._base_vals = np.array(base_vals, dtype=float)
        self._b_base = b_base
        self._c_base = c_base
        self._a_slots = [s for s in self._slots if s.kind == "A"]
        self._b_slots = [s for s in self._slots if s.kind == "b"]
        self._c_slots = [s for s in self._slots if s.kind == "c"]

    # -- instantiation -------------------------------------------------------

    def instantiate(self, theta: np.ndarray) -> ConeProgram:
        theta = np.asarray(theta, dtype=float)
        vals = self._base_vals.copy()
        for s in self._a_slots:
            vals[s.pos] = s.entry.value(theta)
        b = self._b_base.copy()
        for s in self._b_slots:
            b[s.pos] = s.entry.value(theta)
        c = self._c_base.copy()
        for s in self._c_slots:
            c[s.pos] = s.entry.value(theta)
        return ConeProgram.from_triplets(c, self._rows, self._cols, vals,
                                         (self.m, self.n), b, self.cones)

    def offset_value(self, theta: np.ndarray) -> float:
        return entry_value(self.objective_offset, np.asarray(theta, dtype=float))

    # -- gradient chaining ----------------------------------------------------

    def value_grad_theta(self, vg: ValueGradient, theta: np.ndarray, n_theta: int) -> np.ndarray:
        """d(optimal value + offset)/d(theta) through the data entries."""
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(n_theta)
        if self._a_slots:
            r = self._rows[[s.pos for s in self._a_slots]]
            c = self._cols[[s.pos for s in self._a_slots]]
            dv = vg.dA_entries(r, c)
            for s, g in zip(self._a_slots, dv):
                for k, w in s.entry.grad(theta).items():
                    out[k] += g * w
        for s in self._b_slots:
            g = vg.db[s.pos]
            for k, w in s.entry.grad(theta).items():
                out[k] += g * w
        for s in self._c_slots:
            g = vg.dc[s.pos]
            for k, w in s.entry.grad(theta).items():
                out[k] += g * w
        for k, w in self.objective_offset.grad(theta).items():
            out[k] += w
        return out

    def solution_vjp_theta(self, cot: DataCotangents, theta: np.ndarray, n_theta: int) -> np.ndarray:
        """Pull a solution cotangent back to theta (offset does not move w*)."""
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(n_theta)
        if self._a_slots:
            r = self._rows[[s.pos for s in self._a_slots]]
            c = self._cols[[s.pos for s in self._a_slots]]
            dv = cot.dA_entries(r, c)
            for s, g in zip(self._a_slots, dv):
                for k, w in s.entry.grad(theta).items():
                    out[k] += g * w
        for s in self._b_slots:
            g = cot.db[s.pos]
            for k, w in s.entry.grad(theta).items():
                out[k] += g * w
        for s in self._c_slots:
            g = cot.dc[s.pos]
            for k, w in s.entry.grad(theta).items():
                out[k] += g * w
        return out

    def perturbation_for(self, k: int, theta: np.ndarray):
        """(dA triplets, db, dc) moving theta_k by one unit; for forward maps."""
        theta = np.asarray(theta, dtype=float)
        ar, ac, av = [], [], []
        for s in self._a_slots:
            w = s.entry.grad(theta).get(k, 0.0)
            if w != 0.0:
                ar.append(self._rows[s.pos])
                ac.append(self._cols[s.pos])
                av.append(w)
        db = np.zeros(self.m)
        for s in self._b_slots:
            w = s.entry.grad(theta).get(k, 0.0)
            if w != 0.0:
                db[s.pos] = w
        dc = np.zeros(self.n)
        for s in self._c_slots:
            w = s.entry.grad(theta).get(k, 0.0)
            if w != 0.0:
                dc[s.pos] = w
        dA = (ar, ac, av) if ar else None
        return dA, (db if db.any() else None), (dc if dc.any() else None)

    def solution_jac_theta(self, action: SolutionJacobianAction, theta: np.ndarray,
                           n_theta: int, out_indices: np.ndarray) -> np.ndarray:
        """Dense d(w*[out_indices])/d(theta) via one forward solve per component."""
        J = np.zeros((len(out_indices), n_theta))
        for k in range(n_theta):
            dA, db, dc = self.perturbation_for(k, theta)
            if dA is None and db is None and dc is None:
                continue
            dw, _ = action.forward(dA=dA, db=db, dc=dc)
            J[:, k] = dw[out_indices]
        return J


def _const_value(e: AffineScalar | SmoothUnary) -> float:
    return e.value(np.zeros(0)) if isinstance(e, SmoothUnary) else e.const


def _negate(e: AffineScalar | SmoothUnary):
    if isinstance(e, SmoothUnary):
        raise TypeError("unary entries may appear in offsets/objective only")
    return e * -1.0
