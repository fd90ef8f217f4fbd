"""Implicit differentiation of cone-program solutions and optimal values.

At an optimal triple (w, y, s = b - A w) the stationarity and complementarity
conditions form a square system

    F(w, y; A, b, c) = [ A^T y + c ; Phi(b - A w, y) ] = 0,

where Phi is per cone block: s itself on zero blocks, the elementwise
product s*y on nonneg blocks, and the Jordan product s o y on soc blocks.
Linearizing F gives forward/reverse maps between data perturbations
(dA, db, dc) and solution perturbations (dw, dy).

Value gradients follow the Lagrangian envelope identity with this package's
dual convention (y in K*, A^T y + c = 0):

    d(value)/dc = w,     d(value)/db = -y,     d(value)/dA_ij = +y_i w_j.

Degeneracy (rank-deficient linearization, or a soc slack at the cone apex)
is flagged through ``validity=False`` and handled by a least-squares solve;
it is never silently ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conic import NONNEG, SOC, ZERO, ConeProgram, ConeSolution, ConicError, Status

RANK_DEFICIENCY_RATIO = 1e-10
_APEX_TOL = 1e-8


class NotOptimal(ConicError):
    pass


def _arrow(v: np.ndarray) -> np.ndarray:
    d = len(v)
    M = np.eye(d) * v[0]
    M[0, 1:] = v[1:]
    M[1:, 0] = v[1:]
    return M


def _phi_derivatives(program: ConeProgram, s: np.ndarray, y: np.ndarray):
    """Sparse D_s Phi and D_y Phi (m x m block diagonal), plus apex flag."""
    m = program.m
    Ds = sp.lil_matrix((m, m))
    Dy = sp.lil_matrix((m, m))
    apex = False
    scale = 1.0 + float(np.max(np.abs(program.b))) if m else 1.0
    for blk, sl in program.cones.slices():
        if blk.dim == 0:
            continue
        if blk.kind == ZERO:
            Ds[sl, sl] = sp.eye(blk.dim)
        elif blk.kind == NONNEG:
            Ds[sl, sl] = sp.diags(y[sl])
            Dy[sl, sl] = sp.diags(s[sl])
        else:
            Ds[sl, sl] = _arrow(y[sl])
            Dy[sl, sl] = _arrow(s[sl])
            if np.linalg.norm(s[sl]) <= _APEX_TOL * scale:
                apex = True
    return Ds.tocsr(), Dy.tocsr(), apex


@dataclass
class DataCotangents:
    """Reverse-mode cotangents on the program data."""

    dc: np.ndarray
    db: np.ndarray
    _u: np.ndarray
    _vx: np.ndarray
    _w: np.ndarray
    _y: np.ndarray

    def dA_entries(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        return -self._y[rows] * self._vx[cols] + self._u[rows] * self._w[cols]

    def dA_dense(self) -> np.ndarray:
        return -np.outer(self._y, self._vx) + np.outer(self._u, self._w)


class SolutionJacobianAction:
    """Linear maps between data perturbations and solution perturbations.

    ``validity`` is False when the KKT linearization is rank deficient (ratio
    below ``RANK_DEFICIENCY_RATIO``) or a soc slack sits at the cone apex; in
    that case both maps fall back to least squares.
    """

    def __init__(self, program: ConeProgram, solution: ConeSolution):
        if solution.status is not Status.OPTIMAL:
            raise NotOptimal(f"cannot differentiate a {solution.status.value} solution")
        self.program = program
        self.w = solution.primal
        self.y = solution.dual
        self.s = program.b - program.A @ self.w
        n, m = program.n, program.m
        self.n, self.m = n, m

        Ds, Dy, apex = _phi_derivatives(program, self.s, self.y)
        self._Ds = Ds
        A = program.A
        J = sp.bmat(
            [
                [None if n == 0 else sp.csr_matrix((n, n)), A.T],
                [-(Ds @ A), Dy],
            ],
            format="csc",
        )
        self._J = J
        self.validity = not apex
        self._lu = None
        self._pinv = None
        try:
            lu = spla.splu(J)
            self._lu = lu
            smin, smax = _extreme_singular_values(J, lu)
            if smin < RANK_DEFICIENCY_RATIO * smax:
                self.validity = False
        except RuntimeError:
            self.validity = False
        if self._lu is None or not self.validity:
            self._pinv = np.linalg.pinv(J.toarray(), rcond=RANK_DEFICIENCY_RATIO)

    # -- linear solves -----------------------------------------------------

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.validity:
            return self._lu.solve(rhs)
        return self._pinv @ rhs

    def _solve_t(self, rhs: np.ndarray) -> np.ndarray:
        if self.validity:
            return self._lu.solve(rhs, trans="T")
        return self._pinv.T @ rhs

    # -- maps ----------------------------------------------------------------

    def forward(self, dA=None, db=None, dc=None):
        """Map a data perturbation to (dw, dy)."""
        n, m = self.n, self.m
        top = np.zeros(n)
        bot_in = np.zeros(m)
        if dc is not None:
            top += np.asarray(dc, dtype=float)
        if db is not None:
            bot_in += np.asarray(db, dtype=float)
        if dA is not None:
            dA = _as_sparse(dA, (m, n))
            top += dA.T @ self.y
            bot_in -= dA @ self.w
        rhs = -np.concatenate([top, self._Ds @ bot_in])
        delta = self._solve(rhs)
        return delta[:n], delta[n:]

    def reverse(self, grad_w, grad_y=None) -> DataCotangents:
        """Map a cotangent on (w, y) to cotangents on (A, b, c)."""
        g = np.concatenate([
            np.asarray(grad_w, dtype=float),
            np.zeros(self.m) if grad_y is None else np.asarray(grad_y, dtype=float),
        ])
        v = self._solve_t(g)
        vx, vs = v[: self.n], v[self.n:]
        u = self._Ds.T @ vs
        return DataCotangents(dc=-vx, db=-u, _u=u, _vx=vx, _w=self.w, _y=self.y)


@dataclass
class ValueGradient:
    """Envelope gradients of the optimal value; dA is rank one: y w^T."""

    dc: np.ndarray
    db: np.ndarray
    _w: np.ndarray
    _y: np.ndarray

    @property
    def dA(self) -> np.ndarray:
        return np.outer(self._y, self._w)

    def dA_entries(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        return self._y[rows] * self._w[cols]

    def directional(self, dA=None, db=None, dc=None) -> float:
        out = 0.0
        if dc is not None:
            out += float(self.dc @ np.asarray(dc, dtype=float))
        if db is not None:
            out += float(self.db @ np.asarray(db, dtype=float))
        if dA is not None:
            dA = _as_sparse(dA, (len(self._y), len(self._w)))
            out += float(self._y @ (dA @ self._w))
        return out


def solution_jacobian(program: ConeProgram, solution: ConeSolution) -> SolutionJacobianAction:
    return SolutionJacobianAction(program, solution)


def value_gradient(program: ConeProgram, solution: ConeSolution) -> ValueGradient:
    if solution.status is not Status.OPTIMAL:
        raise NotOptimal(f"cannot differentiate a {solution.status.value} solution")
    return ValueGradient(dc=solution.primal.copy(), db=-solution.dual,
                         _w=solution.primal, _y=solution.dual)


def _as_sparse(dA, shape) -> sp.csr_matrix:
    if sp.issparse(dA):
        return dA.tocsr()
    if isinstance(dA, tuple) and len(dA) == 3:
        rows, cols, vals = dA
        return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    return sp.csr_matrix(np.asarray(dA, dtype=float).reshape(shape))


def _extreme_singular_values(J: sp.spmatrix, lu) -> tuple[float, float]:
    """Deterministic estimates of (sigma_min, sigma_max) for the rank gate."""
    smax = sp.linalg.norm(J)  # Frobenius upper bound, adequate for the ratio test
    size = J.shape[0]
    rng = np.random.Generator(np.random.Philox(key=0x5EED))
    v = rng.standard_normal(size)
    v /= np.linalg.norm(v)
    inv_norm_sq = 0.0
    for _ in range(8):
        u = lu.solve(v)
        u = lu.solve(u, trans="T")
        nu = np.linalg.norm(u)
        if not np.isfinite(nu) or nu == 0.0:
            return 0.0, float(smax)
        inv_norm_sq = nu
        v = u / nu
    smin = 1.0 / np.sqrt(inv_norm_sq)
    return float(smin), float(smax)
