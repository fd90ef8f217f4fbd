"""Parameterized second-order-cone ambiguity sets.

An ambiguity set is a support set plus expectation constraints
E[g_i(y, alpha_i)] <= sigma_i whose epigraphs u >= g_i compile to conic rows
with entries that are differentiable in the flat parameter vector
theta = (alpha_1, sigma_1, ..., alpha_I, sigma_I).

Template catalog (g forms):

* linear       mu . y
* abs          |mu . y - h|
* power        |mu . y - h| ** p,   p in {1, 2}
* sq_hinge     (max(0, mu . y - h)) ** 2
* norm         || F y - mu ||_p,    p in {1, 2}, fixed matrix F
* norm_sq      || F y - mu ||_2 ** 2
* max_of       max over sub-templates
* nonneg_sum   sum of nonneg weights times sub-templates

Each template compiles in two directions: with y as variables and alpha
supplied through theta (the lifted support), or with alpha as variables and
y fixed to data atoms (the projection layer and pre-training losses).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .conic import ConeBlock, SolverSettings, Status, solve
from .parametric import (
    AffineScalar,
    Entry,
    LinExpr,
    ProgramBuilder,
    as_entry,
    entry_value,
    theta_entry,
)


class ThetaLengthMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# Conic set representation over named variable roles
# ---------------------------------------------------------------------------


@dataclass
class RepBlock:
    kind: str                       # zero | nonneg | soc
    rows: list[tuple[dict[int, Entry], Entry]]   # expr coeffs over (y,u,v), offset

    @property
    def dim(self) -> int:
        return len(self.rows)


@dataclass
class ConicSetRep:
    """Set {(y, u) : exists v with every block expression in its cone}.

    Coordinates are stacked as (y, u, v); expressions are affine with
    Entry-valued data (so every entry carries a theta-gradient).
    """

    n_y: int
    n_u: int
    n_v: int
    blocks: list[RepBlock]

    @property
    def n_coords(self) -> int:
        return self.n_y + self.n_u + self.n_v

    def block_matrices(self, theta: np.ndarray):
        """Instantiate (A_j, b_j) per block: A_j w - b_j in cone_j."""
        theta = np.asarray(theta, dtype=float)
        out = []
        for blk in self.blocks:
            A = np.zeros((blk.dim, self.n_coords))
            b = np.zeros(blk.dim)
            for r, (coeffs, off) in enumerate(blk.rows):
                for j, e in coeffs.items():
                    A[r, j] = entry_value(e, theta)
                b[r] = -entry_value(off, theta)
            out.append((blk.kind, A, b))
        return out


class RepBuilder:
    """Row assembler producing a ConicSetRep; mirrors ProgramBuilder's API."""

    def __init__(self, n_y: int, n_u: int):
        self.n_y = n_y
        self.n_u = n_u
        self._n_v = 0
        self.blocks: list[RepBlock] = []

    def add_vars(self, name: str, size: int) -> np.ndarray:
        start = self.n_y + self.n_u + self._n_v
        self._n_v += size
        return np.arange(start, start + size)

    def y_indices(self) -> np.ndarray:
        return np.arange(self.n_y)

    def u_index(self, i: int) -> int:
        return self.n_y + i

    def _push(self, kind, exprs):
        self.blocks.append(RepBlock(kind, [(e.coeffs, e.const) for e in exprs]))

    def add_zero(self, *exprs: LinExpr):
        self._push("zero", list(exprs))

    def add_nonneg(self, *exprs: LinExpr):
        self._push("nonneg", list(exprs))

    def add_soc(self, exprs: list[LinExpr]):
        self._push("soc", list(exprs))

    def build(self) -> ConicSetRep:
        return ConicSetRep(self.n_y, self.n_u, self._n_v, self.blocks)


def box_support(lo, hi) -> ConicSetRep:
    """Default support: the box [lo, hi] componentwise."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ValueError("box support needs lo <= hi of equal length")
    rb = RepBuilder(len(lo), 0)
    rows = []
    for k in range(len(lo)):
        rows.append(LinExpr.var(k) - lo[k])
        rows.append(LinExpr.constant(hi[k]) - LinExpr.var(k))
    rb.add_nonneg(*rows)
    return rb.build()


# ---------------------------------------------------------------------------
# Moment templates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentTemplate:
    kind: str
    dim_y: int
    sigma: float = 0.0
    p: int = 1                      # for power / norm kinds
    matrix: tuple | None = None     # fixed F for norm / norm_sq, row tuples
    subs: tuple = ()                # sub-templates for combinators
    weights: tuple = ()             # nonneg_sum weights

    def __post_init__(self):
        if self.kind in ("power", "norm") and self.p not in (1, 2):
            raise ValueError("power/norm templates support p in {1, 2} only")
        if self.kind == "nonneg_sum" and any(w < 0 for w in self.weights):
            raise ValueError("nonneg_sum needs nonnegative weights")

    # -- parameter layout ---------------------------------------------------

    @property
    def n_alpha(self) -> int:
        if self.kind == "linear":
            return self.dim_y
        if self.kind in ("abs", "power", "sq_hinge"):
            return self.dim_y + 1          # (mu, h)
        if self.kind in ("norm", "norm_sq"):
            return self._rows_of_matrix()
        if self.kind in ("max_of", "nonneg_sum"):
            return sum(s.n_alpha for s in self.subs)
        raise ValueError(f"unknown template kind {self.kind!r}")

    def _rows_of_matrix(self) -> int:
        return len(self.matrix) if self.matrix is not None else self.dim_y

    def _F(self) -> np.ndarray:
        if self.matrix is None:
            return np.eye(self.dim_y)
        return np.asarray(self.matrix, dtype=float)

    # -- direct evaluation ----------------------------------------------------

    def evaluate(self, y: np.ndarray, alpha: np.ndarray) -> float:
        y = np.asarray(y, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        if self.kind == "linear":
            return float(alpha @ y)
        if self.kind in ("abs", "power"):
            a = abs(alpha[:-1] @ y - alpha[-1])
            return float(a ** self.p) if self.kind == "power" else float(a)
        if self.kind == "sq_hinge":
            return float(max(0.0, alpha[:-1] @ y - alpha[-1]) ** 2)
        if self.kind in ("norm", "norm_sq"):
            r = self._F() @ y - alpha
            if self.kind == "norm_sq":
                return float(r @ r)
            return float(np.linalg.norm(r, ord=self.p))
        if self.kind == "max_of":
            return max(s.evaluate(y, a) for s, a in zip(self.subs, self._split(alpha)))
        if self.kind == "nonneg_sum":
            return float(sum(w * s.evaluate(y, a)
                             for w, s, a in zip(self.weights, self.subs, self._split(alpha))))
        raise ValueError(self.kind)

    def grad_alpha(self, y: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        """Hand-coded d g / d alpha (a subgradient at kinks)."""
        y = np.asarray(y, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        if self.kind == "linear":
            return y.copy()
        if self.kind in ("abs", "power"):
            a = alpha[:-1] @ y - alpha[-1]
            sgn = np.sign(a)
            inner = np.concatenate([y, [-1.0]])
            if self.kind == "abs" or self.p == 1:
                return sgn * inner
            return 2.0 * a * inner
        if self.kind == "sq_hinge":
            a = max(0.0, alpha[:-1] @ y - alpha[-1])
            return 2.0 * a * np.concatenate([y, [-1.0]])
        if self.kind in ("norm", "norm_sq"):
            r = self._F() @ y - alpha
            if self.kind == "norm_sq":
                return -2.0 * r
            if self.p == 1:
                return -np.sign(r)
            nrm = np.linalg.norm(r)
            return -r / nrm if nrm > 0 else np.zeros_like(r)
        if self.kind == "max_of":
            parts = self._split(alpha)
            vals = [s.evaluate(y, a) for s, a in zip(self.subs, parts)]
            best = int(np.argmax(vals))
            out = [np.zeros(s.n_alpha) for s in self.subs]
            out[best] = self.subs[best].grad_alpha(y, parts[best])
            return np.concatenate(out)
        if self.kind == "nonneg_sum":
            parts = self._split(alpha)
            return np.concatenate([w * s.grad_alpha(y, a)
                                   for w, s, a in zip(self.weights, self.subs, parts)])
        raise ValueError(self.kind)

    def _split(self, alpha: np.ndarray) -> list[np.ndarray]:
        out, at = [], 0
        for s in self.subs:
            out.append(alpha[at:at + s.n_alpha])
            at += s.n_alpha
        return out

    # -- epigraph compilation --------------------------------------------------

    def compile_epigraph(self, builder, u_expr: LinExpr, inner_ctx: "_InnerContext",
                         tag: str = "t") -> None:
        """Emit rows enforcing u_expr >= g(., alpha) into builder."""
        kind = self.kind
        if kind == "linear":
            builder.add_nonneg(u_expr - inner_ctx.linear_all())
            return
        if kind in ("abs", "power") and (kind == "abs" or self.p == 1):
            a = inner_ctx.scalar_inner()
            builder.add_nonneg(u_expr - a, u_expr + a)
            return
        if kind == "power":        # p == 2
            a = inner_ctx.scalar_inner()
            builder.add_soc([u_expr + 1.0, a.scaled(2.0), u_expr - 1.0])
            return
        if kind == "sq_hinge":
            a = inner_ctx.scalar_inner()
            v = builder.add_vars(f"{tag}_hinge", 1)
            ve = LinExpr.var(v[0])
            builder.add_nonneg(ve, ve - a)
            builder.add_soc([u_expr + 1.0, ve.scaled(2.0), u_expr - 1.0])
            return
        if kind in ("norm", "norm_sq"):
            rs = inner_ctx.residuals(self._F())
            if kind == "norm" and self.p == 2:
                builder.add_soc([u_expr] + rs)
                return
            if kind == "norm_sq":
                builder.add_soc([u_expr + 1.0] + [r.scaled(2.0) for r in rs]
                                + [u_expr - 1.0])
                return
            # 1-norm: lifts per residual
            v = builder.add_vars(f"{tag}_absres", len(rs))
            rows = []
            for vi, r in zip(v, rs):
                rows.append(LinExpr.var(vi) - r)
                rows.append(LinExpr.var(vi) + r)
            total = u_expr
            for vi in v:
                total = total - LinExpr.var(vi)
            builder.add_nonneg(*rows, total)
            return
        if kind == "max_of":
            for i, (s, ctx) in enumerate(zip(self.subs, inner_ctx.sub_contexts(self.subs))):
                s.compile_epigraph(builder, u_expr, ctx, tag=f"{tag}_m{i}")
            return
        if kind == "nonneg_sum":
            v = builder.add_vars(f"{tag}_sumlift", len(self.subs))
            for i, (s, ctx, vi) in enumerate(zip(self.subs,
                                                 inner_ctx.sub_contexts(self.subs), v)):
                s.compile_epigraph(builder, LinExpr.var(vi), ctx, tag=f"{tag}_s{i}")
            total = u_expr
            for w, vi in zip(self.weights, v):
                total = total - LinExpr.var(vi).scaled(w)
            builder.add_nonneg(total)
            return
        raise ValueError(kind)

    # -- serialization --------------------------------------------------------

    def to_json_obj(self) -> dict:
        obj = {"kind": self.kind, "dim_y": self.dim_y, "sigma": self.sigma}
        if self.kind in ("power", "norm"):
            obj["p"] = self.p
        if self.kind in ("norm", "norm_sq") and self.matrix is not None:
            obj["matrix"] = [list(r) for r in self.matrix]
        if self.subs:
            obj["subs"] = [s.to_json_obj() for s in self.subs]
        if self.weights:
            obj["weights"] = list(self.weights)
        return obj

    @staticmethod
    def from_json_obj(obj: dict) -> "MomentTemplate":
        subs = tuple(MomentTemplate.from_json_obj(s) for s in obj.get("subs", []))
        matrix = obj.get("matrix")
        return MomentTemplate(
            kind=obj["kind"], dim_y=int(obj["dim_y"]), sigma=float(obj.get("sigma", 0.0)),
            p=int(obj.get("p", 1)),
            matrix=tuple(tuple(r) for r in matrix) if matrix is not None else None,
            subs=subs, weights=tuple(obj.get("weights", ())),
        )


class _InnerContext:
    """Produces the template's inner affine expressions in a given compile mode."""

    def __init__(self, y_exprs: list[LinExpr], alpha_exprs: list[LinExpr]):
        self.y_exprs = y_exprs
        self.alpha_exprs = alpha_exprs

    def linear_all(self) -> LinExpr:
        # sum_k mu_k y_k, bilinear: one side is data
        out = LinExpr()
        for yk, mk in zip(self.y_exprs, self.alpha_exprs):
            out = out + _bilinear(yk, mk)
        return out

    def scalar_inner(self) -> LinExpr:
        # mu . y - h with alpha = (mu, h)
        out = LinExpr()
        for yk, mk in zip(self.y_exprs, self.alpha_exprs[:-1]):
            out = out + _bilinear(yk, mk)
        return out - self.alpha_exprs[-1]

    def residuals(self, F: np.ndarray) -> list[LinExpr]:
        # rows of F y - mu
        out = []
        for r in range(F.shape[0]):
            e = LinExpr()
            for k in range(F.shape[1]):
                if F[r, k] != 0.0:
                    e = e + self.y_exprs[k].scaled(F[r, k])
            out.append(e - self.alpha_exprs[r])
        return out

    def sub_contexts(self, subs) -> list["_InnerContext"]:
        out, at = [], 0
        for s in subs:
            out.append(_InnerContext(self.y_exprs, self.alpha_exprs[at:at + s.n_alpha]))
            at += s.n_alpha
        return out


def _bilinear(y_expr: LinExpr, alpha_expr: LinExpr) -> LinExpr:
    """Product of two affine expressions, one of which must be data.

    Either y_expr is a bare variable and alpha_expr is a pure Entry constant
    (lifted-support mode: theta data times the y variable), or alpha_expr is
    a variable expression and y_expr a numeric constant (projection mode).
    """
    if not y_expr.coeffs:                      # y is numeric data
        return alpha_expr.scaled(_plain_const(y_expr))
    if not alpha_expr.coeffs:                  # alpha is theta data
        (idx, coef), = y_expr.coeffs.items()
        ae = as_entry(alpha_expr.const)
        ce = as_entry(coef)
        if not ce.is_constant:
            raise ValueError("bilinear product needs one pure-data factor")
        return LinExpr({idx: ae * ce.const})
    raise ValueError("bilinear product of two variable expressions")


def _plain_const(e: LinExpr) -> float:
    c = as_entry(e.const)
    if not c.is_constant:
        raise ValueError("expected a numeric constant expression")
    return c.const


# ---------------------------------------------------------------------------
# Ambiguity specification
# ---------------------------------------------------------------------------


@dataclass
class AmbiguitySpec:
    """Support set plus moment templates; theta stacks (alpha_i, sigma_i)."""

    support: ConicSetRep
    templates: list[MomentTemplate]

    def __post_init__(self):
        if self.support.n_u:
            raise ValueError("support must range over y (and lifts) only")
        offs = []
        at = 0
        for t in self.templates:
            offs.append(at)
            at += t.n_alpha + 1
        self._alpha_offsets = offs
        self.n_theta = at

    @property
    def dim_y(self) -> int:
        return self.support.n_y

    @property
    def n_templates(self) -> int:
        return len(self.templates)

    def alpha_slice(self, i: int) -> slice:
        return slice(self._alpha_offsets[i], self._alpha_offsets[i] + self.templates[i].n_alpha)

    def sigma_index(self, i: int) -> int:
        return self._alpha_offsets[i] + self.templates[i].n_alpha

    def alpha_indices(self) -> np.ndarray:
        out = []
        for i in range(self.n_templates):
            out.extend(range(self.alpha_slice(i).start, self.alpha_slice(i).stop))
        return np.array(out, dtype=int)

    def sigma_indices(self) -> np.ndarray:
        return np.array([self.sigma_index(i) for i in range(self.n_templates)], dtype=int)

    def default_theta(self) -> np.ndarray:
        return np.zeros(self.n_theta)

    def evaluate_g(self, i: int, y: np.ndarray, theta: np.ndarray) -> float:
        return self.templates[i].evaluate(y, np.asarray(theta)[self.alpha_slice(i)])

    def sigma_values(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return theta[self.sigma_indices()]

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_theta,):
            raise ThetaLengthMismatch(
                f"theta has shape {theta.shape}, expected ({self.n_theta},)")
        return theta

    # -- serialization --------------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "support": _rep_to_json(self.support),
            "templates": [t.to_json_obj() for t in self.templates],
            "theta_layout": [
                {"template": i, "alpha": [self.alpha_slice(i).start, self.alpha_slice(i).stop],
                 "sigma": self.sigma_index(i)}
                for i in range(self.n_templates)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @staticmethod
    def from_json_obj(obj: dict) -> "AmbiguitySpec":
        return AmbiguitySpec(
            support=_rep_from_json(obj["support"]),
            templates=[MomentTemplate.from_json_obj(t) for t in obj["templates"]],
        )

    @staticmethod
    def from_json(text: str) -> "AmbiguitySpec":
        return AmbiguitySpec.from_json_obj(json.loads(text))


def _rep_to_json(rep: ConicSetRep) -> dict:
    blocks = []
    for blk in rep.blocks:
        rows = []
        for coeffs, off in blk.rows:
            if not all(as_entry(v).is_constant for v in coeffs.values()) or \
               not as_entry(off).is_constant:
                raise ValueError("only constant-data set representations serialize")
            rows.append({
                "coeffs": {str(k): as_entry(v).const for k, v in coeffs.items()},
                "offset": as_entry(off).const,
            })
        blocks.append({"kind": blk.kind, "rows": rows})
    return {"n_y": rep.n_y, "n_u": rep.n_u, "n_v": rep.n_v, "blocks": blocks}


def _rep_from_json(obj: dict) -> ConicSetRep:
    blocks = []
    for b in obj["blocks"]:
        rows = [({int(k): float(v) for k, v in r["coeffs"].items()}, float(r["offset"]))
                for r in b["rows"]]
        blocks.append(RepBlock(b["kind"], rows))
    return ConicSetRep(int(obj["n_y"]), int(obj["n_u"]), int(obj["n_v"]), blocks)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def compile_lifted_support(spec: AmbiguitySpec, theta) -> ConicSetRep:
    """The set of (y, u) with y in the support and u_i >= g_i(y, alpha_i(theta)).

    All theta-dependent entries carry gradients; support rows are constant.
    """
    theta = spec.check_theta(theta)
    K, I = spec.dim_y, spec.n_templates
    rb = RepBuilder(K, I)
    for blk in spec.support.blocks:
        remapped = [({_remap_support_col(int(j), K, I, spec.support): e
                      for j, e in coeffs.items()}, off) for coeffs, off in blk.rows]
        rb.blocks.append(RepBlock(blk.kind, remapped))
    rb._n_v = spec.support.n_v  # support lifts occupy the first v coordinates
    y_exprs = [LinExpr.var(k) for k in range(K)]
    for i, t in enumerate(spec.templates):
        sl = spec.alpha_slice(i)
        alpha_exprs = [LinExpr.constant(theta_entry(k)) for k in range(sl.start, sl.stop)]
        ctx = _InnerContext(y_exprs, alpha_exprs)
        t.compile_epigraph(rb, LinExpr.var(rb.u_index(i)), ctx, tag=f"g{i}")
    return rb.build()


def _remap_support_col(j: int, K: int, I: int, support: ConicSetRep) -> int:
    # support v-lifts shift past the new u coordinates
    return j if j < K else j + I


def theta_jacobians(rep: ConicSetRep, theta) -> list[dict]:
    """Per-block gradients of every (A_j, b_j) entry; constants give {}.

    Returns one dict per block with "A": {(row, col): {k: dA/dtheta_k}} and
    "b": {row: {k: db/dtheta_k}} (b_j is the negated row offset).
    """
    theta = np.asarray(theta, dtype=float)
    out = []
    for blk in rep.blocks:
        agr: dict = {}
        bgr: dict = {}
        for r, (coeffs, off) in enumerate(blk.rows):
            for j, e in coeffs.items():
                g = as_entry(e).grad(theta)
                if g:
                    agr[(r, j)] = g
            og = as_entry(off).grad(theta)
            if og:
                bgr[r] = {k: -w for k, w in og.items()}
        out.append({"A": agr, "b": bgr})
    return out


def membership_margin(rep: ConicSetRep, theta, point,
                      settings: SolverSettings | None = None) -> float:
    """Best minimum slack over lift choices at a fixed (y, u) point.

    Positive means strictly inside, about zero on the boundary, negative
    outside.  Capped at 1 so the auxiliary program stays bounded.
    """
    theta = np.asarray(theta, dtype=float)
    point = np.asarray(point, dtype=float)
    fixed = rep.n_y + rep.n_u
    mats = rep.block_matrices(theta)
    if rep.n_v == 0:
        margin = 1.0
        for kind, A, b in mats:
            r = A[:, :fixed] @ point - b
            if kind == "zero":
                margin = min(margin, -float(np.max(np.abs(r))) if len(r) else margin)
            elif kind == "nonneg":
                margin = min(margin, float(np.min(r)) if len(r) else margin)
            else:
                margin = min(margin, float(r[0] - np.linalg.norm(r[1:])))
        return margin
    pb = ProgramBuilder()
    v = pb.add_vars("v", rep.n_v)
    t = pb.add_vars("slack", 1)[0]
    te = LinExpr.var(t)
    for kind, A, b in mats:
        base = A[:, :fixed] @ point - b
        exprs = []
        for r in range(A.shape[0]):
            e = LinExpr.constant(float(base[r]))
            for j in range(rep.n_v):
                coef = A[r, fixed + j]
                if coef != 0.0:
                    e = e + LinExpr.var(v[j]).scaled(float(coef))
            if kind == "nonneg" or (kind == "soc" and r == 0):
                e = e - te
            exprs.append(e)
        if kind == "zero":
            pb.add_zero(*exprs)
        elif kind == "nonneg":
            pb.add_nonneg(*exprs)
        else:
            pb.add_soc(exprs)
    pb.add_nonneg(LinExpr.constant(1.0) - te)
    pb.set_objective(LinExpr.var(t).scaled(-1.0))
    sol = solve(pb.build().instantiate(np.zeros(0)), settings or SolverSettings())
    if sol.status not in (Status.OPTIMAL, Status.MAX_ITER):
        return -np.inf
    return -sol.objective_value


STRICTLY_FEASIBLE = "strictly_feasible"
MARGINAL = "marginal"
INFEASIBLE = "infeasible"


def slater_probe(rep: ConicSetRep, theta, sigma, probe_tol: float = 1e-6,
                 settings: SolverSettings | None = None) -> str:
    """Maximize the minimum slack of the lifted constraints and u_i < sigma_i.

    Returns strictly_feasible when the best slack clears probe_tol, marginal
    within the tolerance band, infeasible otherwise.
    """
    theta = np.asarray(theta, dtype=float)
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    pb = ProgramBuilder()
    w = pb.add_vars("w", rep.n_coords)
    t = pb.add_vars("slack", 1)[0]
    te = LinExpr.var(t)
    for blk in rep.blocks:
        exprs = []
        for r, (coeffs, off) in enumerate(blk.rows):
            e = LinExpr({w[j]: v for j, v in coeffs.items()}, off)
            if blk.kind == "nonneg":
                e = e - te
            elif blk.kind == "soc" and r == 0:
                e = e - te
            exprs.append(e)
        if blk.kind == "zero":
            pb.add_zero(*exprs)
        elif blk.kind == "nonneg":
            pb.add_nonneg(*exprs)
        else:
            pb.add_soc(exprs)
    for i in range(rep.n_u):
        pb.add_nonneg(LinExpr.constant(sigma[i]) - LinExpr.var(w[rep.n_y + i]) - te)
    pb.add_nonneg(LinExpr.constant(1.0) - te)   # keep the probe bounded
    pb.set_objective(LinExpr.var(t).scaled(-1.0))
    prog = pb.build().instantiate(theta)
    sol = solve(prog, settings or SolverSettings())
    if sol.status not in (Status.OPTIMAL, Status.MAX_ITER):
        return INFEASIBLE
    t_star = -sol.objective_value
    if t_star > probe_tol:
        return STRICTLY_FEASIBLE
    if t_star >= -probe_tol:
        return MARGINAL
    return INFEASIBLE
