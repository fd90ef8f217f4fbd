"""Worst-case expectation builders.

The moment route compiles  sup { E_P[c(x, y)] : P in U(theta) }  into the
dual cone program

    min  r + sigma . beta
    s.t. r - alpha_k(x) + sum_j b_j(theta).eta_kj >= 0        per piece k
         sum_j (A_j^y)^T eta_kj + beta_k(x) = 0               per piece k
         sum_j (A_j^u)^T eta_kj - beta = 0                    per piece k
         sum_j (A_j^v)^T eta_kj = 0                           per piece k
         beta >= 0,  eta_kj in cone_j

over the lifted support V(theta) with blocks A_j (y,u,v) - b_j in cone_j and
a max-affine cost c(x, y) = max_k [alpha_k(x) + beta_k(x).y].  Support-side
sign restrictions on y (for example nonnegativity) belong in the support
set, which keeps the y-stationarity rows equalities.

The sign convention sum_j (A_j^u)^T eta_kj = beta is fixed by deriving the
inner sup's Lagrangian dual once (maximize over (y,u,v) in V of
beta_k(x).y - beta.u) and is gated by the discretized simplex-LP oracle in
the test suite.

The Wasserstein route compiles the ball of radius eps around a weighted
empirical distribution, for max-affine costs, into

    min  lam * eps + sum_n w_n s_n
    s.t. s_n - alpha_k(x) - gamma_nk . y_n + sum_j b_j . eta_nkj >= 0
         sum_j (A_j^y)^T eta_nkj + beta_k(x) - gamma_nk = 0
         sum_j (A_j^v)^T eta_nkj = 0
         eta_nkj in cone_j,  ||gamma_nk||_* <= lam

with the dual transport norm (2-norm is self-dual; 1-norm dualizes to the
max norm).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .ambiguity import (
    INFEASIBLE,
    MARGINAL,
    AmbiguitySpec,
    ConicSetRep,
    compile_lifted_support,
    slater_probe,
)
from .conic import ConeProgram, ConeSolution, SolverSettings, Status, solve
from .diff import solution_jacobian, value_gradient
from .parametric import (
    AffineScalar,
    Entry,
    LinExpr,
    ParametricConeProgram,
    ProgramBuilder,
    as_entry,
    entry_value,
    theta_entry,
)


class ReformError(Exception):
    pass


class SlaterViolation(ReformError):
    pass


class UnsupportedCost(ReformError):
    pass


class VertexCapExceeded(ReformError):
    pass


class UnboundedDual(ReformError):
    pass


class NegativeRadius(ReformError):
    pass


class InfeasibleFixing(ReformError):
    pass


# ---------------------------------------------------------------------------
# Cost models
# ---------------------------------------------------------------------------


@dataclass
class MaxAffinePieces:
    """c(x, y) = max_k [ alpha_k(x) + beta_k(x) . y ], all maps affine in x."""

    alpha_lin: np.ndarray     # (Kp, n_x)
    alpha_const: np.ndarray   # (Kp,)
    beta_lin: np.ndarray      # (Kp, K, n_x)
    beta_const: np.ndarray    # (Kp, K)

    @property
    def n_pieces(self) -> int:
        return self.alpha_const.shape[0]

    @property
    def dim_y(self) -> int:
        return self.beta_const.shape[1]

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> float:
        vals = (self.alpha_lin @ x + self.alpha_const
                + (self.beta_lin @ x + self.beta_const) @ y)
        return float(np.max(vals))


@dataclass
class CostModel:
    """Uncertain cost in single-stage, two-stage, or max-affine form.

    An optional affine first-stage term (paid regardless of y) rides along
    outside the uncertain part.
    """

    kind: str
    n_x: int
    dim_y: int
    # single_stage: c(x, y) = y . (C x + c0)
    C: np.ndarray | None = None
    c0: np.ndarray | None = None
    # two_stage: c(x, y) = min { q.g : W g = h(y) - T(y) x, g >= 0 }
    q: np.ndarray | None = None
    W: np.ndarray | None = None
    T: np.ndarray | None = None      # (K+1, m_rec, n_x), T(y) = T[0] + sum_k T[1+k] y_k
    h: np.ndarray | None = None      # (K+1, m_rec)
    pieces: MaxAffinePieces | None = None
    first_stage_lin: np.ndarray | None = None
    first_stage_const: float = 0.0

    def __post_init__(self):
        if self.kind not in ("single_stage", "two_stage", "max_affine"):
            raise UnsupportedCost(f"unknown cost form {self.kind!r}")
        if self.first_stage_lin is None:
            self.first_stage_lin = np.zeros(self.n_x)
        if self.kind == "max_affine" and self.pieces.n_pieces < 1:
            raise UnsupportedCost("max_affine needs at least one piece")

    # -- direct evaluation (oracle path) ------------------------------------

    def first_stage(self, x: np.ndarray) -> float:
        return float(self.first_stage_lin @ x + self.first_stage_const)

    def uncertain_part(self, x: np.ndarray, y: np.ndarray,
                       settings: SolverSettings | None = None) -> float:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "single_stage":
            return float(y @ (self.C @ x + self.c0))
        if self.kind == "max_affine":
            return self.pieces.evaluate(x, y)
        return self.recourse_value(x, y, settings)

    def evaluate(self, x: np.ndarray, y: np.ndarray,
                 settings: SolverSettings | None = None) -> float:
        return self.first_stage(x) + self.uncertain_part(x, y, settings)

    def recourse_value(self, x: np.ndarray, y: np.ndarray,
                       settings: SolverSettings | None = None) -> float:
        """Solve the recourse LP; raises on infeasibility (recourse violated)."""
        rhs = self._h_of(y) - self._T_of(y) @ x
        ng = len(self.q)
        pb = ProgramBuilder()
        g = pb.add_vars("g", ng)
        for r in range(self.W.shape[0]):
            e = LinExpr.constant(-float(rhs[r]))
            for j in range(ng):
                if self.W[r, j] != 0.0:
                    e = e + LinExpr.var(g[j]).scaled(float(self.W[r, j]))
            pb.add_zero(e)
        pb.add_nonneg(*[LinExpr.var(g[j]) for j in range(ng)])
        obj = LinExpr()
        for j in range(ng):
            obj = obj + LinExpr.var(g[j]).scaled(float(self.q[j]))
        pb.set_objective(obj)
        sol = solve(pb.build().instantiate(np.zeros(0)), settings or SolverSettings())
        if sol.status is not Status.OPTIMAL:
            raise UnboundedDual(f"recourse LP ended {sol.status.value} at x={x}, y={y}")
        return float(sol.objective_value)

    def _T_of(self, y: np.ndarray) -> np.ndarray:
        return self.T[0] + np.tensordot(y, self.T[1:], axes=1)

    def _h_of(self, y: np.ndarray) -> np.ndarray:
        return self.h[0] + y @ self.h[1:]

    # -- constructors ---------------------------------------------------------

    @staticmethod
    def single_stage(C, c0, first_stage_lin=None, first_stage_const=0.0) -> "CostModel":
        C = np.atleast_2d(np.asarray(C, dtype=float))
        c0 = np.asarray(c0, dtype=float).ravel()
        K, n_x = C.shape
        return CostModel("single_stage", n_x, K, C=C, c0=c0,
                         first_stage_lin=_opt_vec(first_stage_lin, n_x),
                         first_stage_const=first_stage_const)

    @staticmethod
    def two_stage(q, W, T, h, n_x, dim_y, first_stage_lin=None,
                  first_stage_const=0.0) -> "CostModel":
        q = np.asarray(q, dtype=float).ravel()
        W = np.atleast_2d(np.asarray(W, dtype=float))
        T = np.asarray(T, dtype=float)
        h = np.asarray(h, dtype=float)
        if T.shape != (dim_y + 1, W.shape[0], n_x) or h.shape != (dim_y + 1, W.shape[0]):
            raise UnsupportedCost("two_stage shapes: T (K+1, m, n_x), h (K+1, m)")
        return CostModel("two_stage", n_x, dim_y, q=q, W=W, T=T, h=h,
                         first_stage_lin=_opt_vec(first_stage_lin, n_x),
                         first_stage_const=first_stage_const)

    @staticmethod
    def max_affine(pieces: MaxAffinePieces, first_stage_lin=None,
                   first_stage_const=0.0) -> "CostModel":
        n_x = pieces.alpha_lin.shape[1]
        return CostModel("max_affine", n_x, pieces.dim_y, pieces=pieces,
                         first_stage_lin=_opt_vec(first_stage_lin, n_x),
                         first_stage_const=first_stage_const)


def _opt_vec(v, n):
    return np.zeros(n) if v is None else np.asarray(v, dtype=float).ravel()


def _is_zero_entry(e) -> bool:
    return isinstance(e, AffineScalar) and e.is_constant and e.const == 0.0


def dual_polytope_vertices(W: np.ndarray, q: np.ndarray, cap: int = 4096,
                           tol: float = 1e-9) -> np.ndarray:
    """Vertices of {pi : W^T pi <= q} by basis enumeration.

    Raises UnboundedDual when the polytope has a recession direction and
    VertexCapExceeded past the cap.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    q = np.asarray(q, dtype=float).ravel()
    m, ng = W.shape
    if ng < m:
        raise UnboundedDual("fewer recourse columns than rows; dual is unbounded")
    WT = W.T  # (ng, m) constraint normals
    # recession cone {d : W^T d <= 0} must be {0}; genuine directions hit
    # the probe's unit box, so a loose threshold separates cleanly
    for i in range(m):
        for sgn in (+1.0, -1.0):
            d = _recession_probe(WT, i, sgn)
            if d > 1e-6:
                raise UnboundedDual("dual polytope of the recourse LP is unbounded")
    if _n_combos(ng, m) > 2_000_000:
        raise VertexCapExceeded(f"too many candidate bases: C({ng},{m})")
    verts = []
    for idx in itertools.combinations(range(ng), m):
        B = WT[list(idx), :]
        try:
            pi = np.linalg.solve(B, q[list(idx)])
        except np.linalg.LinAlgError:
            continue
        if np.all(WT @ pi <= q + tol * (1.0 + np.abs(q))):
            verts.append(pi)
    if not verts:
        raise UnboundedDual("no dual vertices found; recourse dual infeasible?")
    verts = np.array(verts)
    keep = []
    for v in verts:
        if not any(np.allclose(v, verts[j], atol=1e-8) for j in keep):
            keep.append(len(keep))
            if len(keep) > cap:
                raise VertexCapExceeded(f"more than {cap} dual vertices")
            verts[len(keep) - 1] = v
    return verts[: len(keep)]


def _recession_probe(WT: np.ndarray, coord: int, sgn: float) -> float:
    """max sgn*d_coord subject to W^T d <= 0, |d| <= 1."""
    ng, m = WT.shape
    pb = ProgramBuilder()
    d = pb.add_vars("d", m)
    for r in range(ng):
        e = LinExpr()
        for j in range(m):
            if WT[r, j] != 0.0:
                e = e + LinExpr.var(d[j]).scaled(-float(WT[r, j]))
        pb.add_nonneg(e)
    for j in range(m):
        pb.add_nonneg(LinExpr.constant(1.0) - LinExpr.var(d[j]))
        pb.add_nonneg(LinExpr.constant(1.0) + LinExpr.var(d[j]))
    pb.set_objective(LinExpr.var(d[coord]).scaled(-sgn))
    sol = solve(pb.build().instantiate(np.zeros(0)), SolverSettings(tol=1e-7))
    if sol.status is Status.OPTIMAL or (
            sol.status is Status.MAX_ITER and max(sol.residuals) <= 1e-6):
        return -sol.objective_value
    return np.inf


def _n_combos(n, k):
    from math import comb
    return comb(n, k)


def two_stage_to_max_affine(cost: CostModel, cap: int = 4096) -> CostModel:
    """Exact max-affine form via the recourse dual's vertices.

    c(x,y) = max_k pi_k . (h(y) - T(y) x) under relatively complete recourse
    and a bounded dual polytope {pi : W^T pi <= q}.
    """
    if cost.kind != "two_stage":
        raise UnsupportedCost("expected a two_stage cost")
    verts = dual_polytope_vertices(cost.W, cost.q, cap=cap)
    Kp = len(verts)
    K, n_x = cost.dim_y, cost.n_x
    alpha_lin = np.empty((Kp, n_x))
    alpha_const = np.empty(Kp)
    beta_lin = np.empty((Kp, K, n_x))
    beta_const = np.empty((Kp, K))
    for k, pi in enumerate(verts):
        alpha_lin[k] = -(pi @ cost.T[0])
        alpha_const[k] = pi @ cost.h[0]
        for j in range(K):
            beta_lin[k, j] = -(pi @ cost.T[1 + j])
            beta_const[k, j] = pi @ cost.h[1 + j]
    pieces = MaxAffinePieces(alpha_lin, alpha_const, beta_lin, beta_const)
    return CostModel.max_affine(pieces, first_stage_lin=cost.first_stage_lin,
                                first_stage_const=cost.first_stage_const)


def as_max_affine(cost: CostModel, cap: int = 4096) -> CostModel:
    if cost.kind == "max_affine":
        return cost
    if cost.kind == "single_stage":
        K, n_x = cost.C.shape
        pieces = MaxAffinePieces(
            alpha_lin=np.zeros((1, n_x)), alpha_const=np.zeros(1),
            beta_lin=cost.C[None, :, :], beta_const=cost.c0[None, :])
        return CostModel.max_affine(pieces, first_stage_lin=cost.first_stage_lin,
                                    first_stage_const=cost.first_stage_const)
    return two_stage_to_max_affine(cost, cap=cap)


# ---------------------------------------------------------------------------
# Decision sets and instances
# ---------------------------------------------------------------------------


@dataclass
class DecisionSet:
    """Conic feasible set over x (plus lifts) with a binary mask."""

    rep: ConicSetRep            # constant-entry set over x coords
    binary_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.binary_idx = np.asarray(self.binary_idx, dtype=int)
        if self.rep.n_u:
            raise ValueError("decision sets have no u coordinates")

    @property
    def n_x(self) -> int:
        return self.rep.n_y

    @property
    def n_binary(self) -> int:
        return len(self.binary_idx)


@dataclass
class DecisionLoss:
    """Realized decision loss l(x_d, x_c, y) with its continuous gradient."""

    value: callable
    grad_xc: callable


@dataclass
class WassersteinSpec:
    atoms: np.ndarray                # (N, K)
    weights: np.ndarray              # (N,)
    radius: float | AffineScalar
    support: ConicSetRep
    transport_norm: int = 2

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if len(self.weights) != self.atoms.shape[0]:
            raise ValueError("one weight per atom")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if self.transport_norm not in (1, 2):
            raise ValueError("transport_norm must be 1 or 2")

    @property
    def dim_y(self) -> int:
        return self.atoms.shape[1]


@dataclass
class DROInstance:
    decision: DecisionSet
    ambiguity: AmbiguitySpec | WassersteinSpec
    cost: CostModel
    loss: DecisionLoss | None = None

    def __post_init__(self):
        if self.cost.n_x != self.decision.n_x:
            raise ValueError("cost and decision dimension mismatch")

    @property
    def n_theta(self) -> int:
        if isinstance(self.ambiguity, AmbiguitySpec):
            return self.ambiguity.n_theta
        radius = as_entry(self.ambiguity.radius)
        return (1 + max(k for k, _ in radius.lin)) if not radius.is_constant else 0


# ---------------------------------------------------------------------------
# Worst-case builders
# ---------------------------------------------------------------------------


@dataclass
class WorstCaseProgram:
    parametric: ParametricConeProgram
    theta: np.ndarray
    x_idx: np.ndarray
    binary_cols: np.ndarray
    n_theta: int

    def instantiate(self) -> ConeProgram:
        return self.parametric.instantiate(self.theta)

    def offset(self) -> float:
        return self.parametric.offset_value(self.theta)


def _emit_decision_rows(pb: ProgramBuilder, decision: DecisionSet, x, fixed):
    lifts = pb.add_vars("x_lift", decision.rep.n_v) if decision.rep.n_v else np.zeros(0, dtype=int)
    idx_map = np.concatenate([x, lifts]).astype(int)
    for blk in decision.rep.blocks:
        exprs = []
        for coeffs, off in blk.rows:
            e = LinExpr({int(idx_map[j]): v for j, v in coeffs.items()}, off)
            exprs.append(e)
        if blk.kind == "zero":
            pb.add_zero(*exprs)
        elif blk.kind == "nonneg":
            pb.add_nonneg(*exprs)
        else:
            pb.add_soc(exprs)
    if fixed:
        for xi, val in fixed.items():
            pb.add_zero(LinExpr.var(x[int(xi)]) - float(val))


def build_worst_case(instance: DROInstance, theta, fixed: dict | None = None,
                     piece_cap: int = 4096, slater_check: str = "warn") -> WorstCaseProgram:
    """Compile min_x sup_{P in U(theta)} E[c(x, y)] plus first-stage cost.

    ``fixed`` pins chosen x coordinates (binary fixings) via equality rows.
    ``slater_check`` is one of skip|warn|strict; an infeasible ambiguity set
    always raises SlaterViolation.
    """
    if not isinstance(instance.ambiguity, AmbiguitySpec):
        return build_wasserstein(instance, theta=theta, fixed=fixed, piece_cap=piece_cap)
    spec = instance.ambiguity
    theta = spec.check_theta(theta)
    cost = as_max_affine(instance.cost, cap=piece_cap)
    if cost.dim_y != spec.dim_y:
        raise UnsupportedCost("cost and ambiguity uncertainty dimensions differ")
    rep = compile_lifted_support(spec, theta)
    if slater_check != "skip":
        verdict = slater_probe(rep, theta, spec.sigma_values(theta))
        if verdict == INFEASIBLE:
            raise SlaterViolation("ambiguity set is empty at this theta")
        if verdict == MARGINAL:
            if slater_check == "strict":
                raise SlaterViolation("ambiguity set has no interior at this theta")
            warnings.warn("ambiguity set is marginal (no strict interior); "
                          "the reformulation remains valid by continuity",
                          RuntimeWarning, stacklevel=2)

    K, I, V = rep.n_y, rep.n_u, rep.n_v
    Kp = cost.pieces.n_pieces
    pb = ProgramBuilder()
    x = pb.add_vars("x", instance.decision.n_x)
    r = pb.add_vars("r", 1)[0]
    beta = pb.add_vars("beta", I) if I else np.zeros(0, dtype=int)
    eta = [[pb.add_vars(f"eta_{k}_{j}", blk.dim) for j, blk in enumerate(rep.blocks)]
           for k in range(Kp)]

    for k in range(Kp):
        # piece bound row: r - alpha_k(x) + sum_j b_j . eta_kj >= 0
        row = LinExpr.var(r) + LinExpr.constant(-float(cost.pieces.alpha_const[k]))
        for j, coef in enumerate(cost.pieces.alpha_lin[k]):
            if coef != 0.0:
                row = row + LinExpr.var(x[j]).scaled(-float(coef))
        for j, blk in enumerate(rep.blocks):
            for rr, (coeffs, off) in enumerate(blk.rows):
                # b_j[rr] = -off
                oe = as_entry(off)
                if not _is_zero_entry(oe):
                    row = row + LinExpr({int(eta[k][j][rr]): oe * -1.0})
        pb.add_nonneg(row)

        # stationarity over (y, u, v)
        for coord in range(K + I + V):
            e = LinExpr()
            for j, blk in enumerate(rep.blocks):
                for rr, (coeffs, off) in enumerate(blk.rows):
                    a = coeffs.get(coord)
                    if a is None:
                        continue
                    ae = as_entry(a)
                    if _is_zero_entry(ae):
                        continue
                    e = e + LinExpr({int(eta[k][j][rr]): ae})
            if coord < K:
                bc = cost.pieces.beta_const[k, coord]
                e = e + LinExpr.constant(float(bc))
                for j, coef in enumerate(cost.pieces.beta_lin[k, coord]):
                    if coef != 0.0:
                        e = e + LinExpr.var(x[j]).scaled(float(coef))
            elif coord < K + I:
                e = e - LinExpr.var(beta[coord - K])
            pb.add_zero(e)

        # eta_kj in the dual cone of block j (self-dual blocks; zero -> free)
        for j, blk in enumerate(rep.blocks):
            if blk.kind == "nonneg":
                pb.add_nonneg(*[LinExpr.var(v) for v in eta[k][j]])
            elif blk.kind == "soc":
                pb.add_soc([LinExpr.var(v) for v in eta[k][j]])

    if I:
        pb.add_nonneg(*[LinExpr.var(b) for b in beta])

    _emit_decision_rows(pb, instance.decision, x, fixed)

    obj = LinExpr.var(r)
    for i in range(I):
        obj = obj + LinExpr({int(beta[i]): theta_entry(spec.sigma_index(i))})
    for j, coef in enumerate(cost.first_stage_lin):
        if coef != 0.0:
            obj = obj + LinExpr.var(x[j]).scaled(float(coef))
    obj = obj + LinExpr.constant(float(cost.first_stage_const))
    pb.set_objective(obj)

    parametric = pb.build()
    binary_cols = x[instance.decision.binary_idx] if instance.decision.n_binary else np.zeros(0, dtype=int)
    return WorstCaseProgram(parametric, theta, x, binary_cols.astype(int), spec.n_theta)


def build_wasserstein(instance: DROInstance, theta=None, fixed: dict | None = None,
                      piece_cap: int = 4096) -> WorstCaseProgram:
    """Compile the Wasserstein-ball worst case for a max-affine cost."""
    wspec = instance.ambiguity
    if not isinstance(wspec, WassersteinSpec):
        raise UnsupportedCost("instance does not carry a Wasserstein ambiguity set")
    cost = as_max_affine(instance.cost, cap=piece_cap)
    if cost.dim_y != wspec.dim_y:
        raise UnsupportedCost("cost and ambiguity uncertainty dimensions differ")
    radius = as_entry(wspec.radius)
    n_theta = 0
    if not radius.is_constant:
        n_theta = 1 + max(k for k, _ in radius.lin)
    theta0 = np.zeros(n_theta) if theta is None else np.asarray(theta, dtype=float)
    if entry_value(radius, theta0) < 0:
        raise NegativeRadius(f"radius {entry_value(radius, theta0)} < 0")

    sup = wspec.support
    if sup.n_u:
        raise UnsupportedCost("Wasserstein support ranges over y (and lifts) only")
    K, V = sup.n_y, sup.n_v
    mats = sup.block_matrices(np.zeros(0))
    N = wspec.atoms.shape[0]
    Kp = cost.pieces.n_pieces

    pb = ProgramBuilder()
    x = pb.add_vars("x", instance.decision.n_x)
    lam = pb.add_vars("lam", 1)[0]
    s = pb.add_vars("s", N)
    gamma = [[pb.add_vars(f"gamma_{n}_{k}", K) for k in range(Kp)] for n in range(N)]
    eta = [[[pb.add_vars(f"eta_{n}_{k}_{j}", A.shape[0]) for j, (_, A, _) in enumerate(mats)]
            for k in range(Kp)] for n in range(N)]

    for n in range(N):
        yn = wspec.atoms[n]
        for k in range(Kp):
            row = LinExpr.var(s[n]) + LinExpr.constant(-float(cost.pieces.alpha_const[k]))
            for j, coef in enumerate(cost.pieces.alpha_lin[k]):
                if coef != 0.0:
                    row = row + LinExpr.var(x[j]).scaled(-float(coef))
            for kk in range(K):
                if yn[kk] != 0.0:
                    row = row + LinExpr.var(gamma[n][k][kk]).scaled(-float(yn[kk]))
            for j, (_, A, b) in enumerate(mats):
                for rr in range(A.shape[0]):
                    if b[rr] != 0.0:
                        row = row + LinExpr.var(eta[n][k][j][rr]).scaled(float(b[rr]))
            pb.add_nonneg(row)

            for coord in range(K + V):
                e = LinExpr()
                for j, (_, A, b) in enumerate(mats):
                    for rr in range(A.shape[0]):
                        if A[rr, coord] != 0.0:
                            e = e + LinExpr.var(eta[n][k][j][rr]).scaled(float(A[rr, coord]))
                if coord < K:
                    e = e + LinExpr.constant(float(cost.pieces.beta_const[k, coord]))
                    for j, coef in enumerate(cost.pieces.beta_lin[k, coord]):
                        if coef != 0.0:
                            e = e + LinExpr.var(x[j]).scaled(float(coef))
                    e = e - LinExpr.var(gamma[n][k][coord])
                pb.add_zero(e)

            for j, (kind, A, b) in enumerate(mats):
                if kind == "nonneg":
                    pb.add_nonneg(*[LinExpr.var(v) for v in eta[n][k][j]])
                elif kind == "soc":
                    pb.add_soc([LinExpr.var(v) for v in eta[n][k][j]])

            if wspec.transport_norm == 2:
                pb.add_soc([LinExpr.var(lam)] + [LinExpr.var(v) for v in gamma[n][k]])
            else:  # dual of the 1-norm is the max norm
                for v in gamma[n][k]:
                    pb.add_nonneg(LinExpr.var(lam) - LinExpr.var(v),
                                  LinExpr.var(lam) + LinExpr.var(v))

    _emit_decision_rows(pb, instance.decision, x, fixed)

    obj = LinExpr({int(lam): radius})
    for n in range(N):
        if wspec.weights[n] != 0.0:
            obj = obj + LinExpr.var(s[n]).scaled(float(wspec.weights[n]))
    for j, coef in enumerate(cost.first_stage_lin):
        if coef != 0.0:
            obj = obj + LinExpr.var(x[j]).scaled(float(coef))
    obj = obj + LinExpr.constant(float(cost.first_stage_const))
    pb.set_objective(obj)

    parametric = pb.build()
    binary_cols = x[instance.decision.binary_idx] if instance.decision.n_binary else np.zeros(0, dtype=int)
    return WorstCaseProgram(parametric, theta0, x, binary_cols.astype(int),
                            n_theta)


# ---------------------------------------------------------------------------
# Continuous solve with differentiation handles
# ---------------------------------------------------------------------------


class DROContinuousSolution:
    """Optimal continuous decision with theta-differentiation handles."""

    def __init__(self, wc: WorstCaseProgram, program: ConeProgram,
                 solution: ConeSolution, instance: DROInstance):
        self.wc = wc
        self.program = program
        self.solution = solution
        self.instance = instance
        self.x = solution.primal[wc.x_idx]
        self.value = float(solution.objective_value + wc.offset())

    @property
    def x_continuous(self) -> np.ndarray:
        mask = np.ones(len(self.x), dtype=bool)
        mask[self.instance.decision.binary_idx] = False
        return self.x[mask]

    @cached_property
    def _jac(self):
        return solution_jacobian(self.program, self.solution)

    @property
    def diff_valid(self) -> bool:
        return self._jac.validity

    def grad_value_theta(self) -> np.ndarray:
        vg = value_gradient(self.program, self.solution)
        return self.wc.parametric.value_grad_theta(vg, self.wc.theta, self.wc.n_theta)

    def vjp_x_theta(self, cot_x: np.ndarray) -> np.ndarray:
        """Pull a cotangent on the x block back to theta."""
        g = np.zeros(self.program.n)
        g[self.wc.x_idx] = cot_x
        cot = self._jac.reverse(g)
        return self.wc.parametric.solution_vjp_theta(cot, self.wc.theta, self.wc.n_theta)

    def jac_x_theta(self) -> np.ndarray:
        """Dense d x* / d theta."""
        return self.wc.parametric.solution_jac_theta(
            self._jac, self.wc.theta, self.wc.n_theta, self.wc.x_idx)


def solve_dro_continuous(instance: DROInstance, x_d, theta,
                         settings: SolverSettings | None = None,
                         slater_check: str = "skip") -> DROContinuousSolution:
    """Solve the DRO with the binary block pinned to x_d."""
    x_d = np.asarray(x_d, dtype=float).ravel()
    if len(x_d) != instance.decision.n_binary:
        raise ValueError("x_d length must match the binary mask")
    fixed = {int(i): float(v) for i, v in zip(instance.decision.binary_idx, x_d)}
    wc = build_worst_case(instance, theta, fixed=fixed, slater_check=slater_check)
    program = wc.instantiate()
    sol = solve(program, settings or SolverSettings())
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleFixing(f"x_d={x_d} leaves no feasible continuous decision")
    if sol.status is not Status.OPTIMAL:
        raise ReformError(f"continuous DRO solve ended with {sol.status.value}")
    return DROContinuousSolution(wc, program, sol, instance)
