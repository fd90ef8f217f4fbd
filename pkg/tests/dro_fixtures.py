"""Shared instance generators and independent oracles for the DRO layers.

The oracles deliberately avoid the duality-based compile path: moments are
evaluated directly from the templates, costs from their primal definitions.
"""

import numpy as np

from drolayers.ambiguity import AmbiguitySpec, MomentTemplate, box_support
from drolayers.conic import SolverSettings, Status, solve
from drolayers.parametric import LinExpr, ProgramBuilder
from drolayers.reform import (
    CostModel,
    DecisionLoss,
    DecisionSet,
    DROInstance,
    MaxAffinePieces,
    as_max_affine,
)


def spread_templates(kind: str, K: int):
    """The three deviation-moment menus used across the experiments."""
    if kind == "l1":
        return [MomentTemplate("norm", K, p=1)]
    if kind == "l2sq":
        return [MomentTemplate("norm_sq", K)]
    if kind == "both":
        return [MomentTemplate("norm", K, p=1), MomentTemplate("norm_sq", K)]
    raise ValueError(kind)


def theta_for(spec: AmbiguitySpec, mus, sigmas) -> np.ndarray:
    th = np.zeros(spec.n_theta)
    for i in range(spec.n_templates):
        th[spec.alpha_slice(i)] = mus[i]
        th[spec.sigma_index(i)] = sigmas[i]
    return th


def box_decision(lo, hi, binary_idx=()) -> DecisionSet:
    return DecisionSet(box_support(lo, hi), np.asarray(binary_idx, dtype=int))


def random_cost(rng, form: str, n_x: int, K: int) -> CostModel:
    if form == "single_stage":
        return CostModel.single_stage(rng.uniform(-1, 1, (K, n_x)),
                                      rng.uniform(-1, 1, K))
    if form == "max_affine":
        Kp = int(rng.integers(2, 4))
        return CostModel.max_affine(MaxAffinePieces(
            alpha_lin=rng.uniform(-1, 1, (Kp, n_x)),
            alpha_const=rng.uniform(-1, 1, Kp),
            beta_lin=rng.uniform(-1, 1, (Kp, K, n_x)),
            beta_const=rng.uniform(-1, 1, (Kp, K))))
    if form == "two_stage":
        # W = [M, -M] keeps recourse complete and the dual polytope a box-like set
        m_rec = K
        M = rng.uniform(0.5, 1.5, (m_rec, m_rec)) * np.eye(m_rec) \
            + rng.uniform(-0.2, 0.2, (m_rec, m_rec))
        W = np.hstack([M, -M])
        q = rng.uniform(0.5, 2.0, 2 * m_rec)
        T = rng.uniform(-0.5, 0.5, (K + 1, m_rec, n_x))
        h = rng.uniform(-0.5, 0.5, (K + 1, m_rec))
        for k in range(K):
            h[1 + k, k] += 1.0  # couple y into the right-hand side
        return CostModel.two_stage(q, W, T, h, n_x=n_x, dim_y=K)
    raise ValueError(form)


def random_moment_instance(rng, form: str, template_kind: str = "both",
                           K: int = 2, n_x: int = 2, box=(-2.0, 4.0)):
    """Random bounded instance with an interior ambiguity set."""
    support = box_support([box[0]] * K, [box[1]] * K)
    templates = spread_templates(template_kind, K)
    spec = AmbiguitySpec(support, templates)
    mu = rng.uniform(box[0] + 1.0, box[1] - 1.0, size=K)
    sigmas = []
    for t in templates:
        sigmas.append(rng.uniform(0.6, 1.8) * (1.0 if t.kind == "norm" else 1.5))
    theta = theta_for(spec, [mu] * len(templates), sigmas)
    cost = random_cost(rng, form, n_x, K)
    decision = box_decision([-1.5] * n_x, [1.5] * n_x)
    inst = DROInstance(decision, spec, cost)
    x = rng.uniform(-1.0, 1.0, size=n_x)
    return inst, theta, x


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def grid_points(lo, hi, per_dim: int, K: int) -> np.ndarray:
    """Use per_dim from the nested chain 6, 11, 21, 41 so refinement is monotone."""
    axes = [np.linspace(lo, hi, per_dim) for _ in range(K)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def smooth_portfolio_instance(rng, n=3, sigma=None):
    """Simplex-constrained return maximization with per-vector squared spread.

    The worst case has the closed form -mu.x + sqrt(sigma)*||x|| on a wide
    support, so the optimum responds smoothly to theta.
    """
    from drolayers.ambiguity import RepBuilder
    from drolayers.parametric import LinExpr

    spec = AmbiguitySpec(box_support([-50.0] * n, [50.0] * n),
                         [MomentTemplate("norm_sq", n)])
    mu = rng.uniform(0.0, 0.1, size=n)
    sig = float(sigma if sigma is not None else rng.uniform(0.02, 0.08))
    theta = theta_for(spec, [mu], [sig])
    rb = RepBuilder(n, 0)
    total = LinExpr.constant(-1.0)
    for k in range(n):
        total = total + LinExpr.var(k)
    rb.add_zero(total)
    rb.add_nonneg(*[LinExpr.var(k) for k in range(n)])
    decision = DecisionSet(rb.build())
    cost = CostModel.single_stage(-np.eye(n), np.zeros(n))
    return DROInstance(decision, spec, cost), theta


def grid_lp_worst_case(inst: DROInstance, theta, x, pts,
                       settings=None) -> float:
    """sup over grid-supported distributions of E[c(x, y)] under the moments.

    Uses direct template evaluation and direct cost evaluation; infeasible
    grids return -inf.
    """
    spec = inst.ambiguity
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    G = len(pts)
    cost_vals = np.array([inst.cost.uncertain_part(x, y) for y in pts])
    gvals = np.array([[spec.evaluate_g(i, y, theta) for y in pts]
                      for i in range(spec.n_templates)])
    sig = spec.sigma_values(theta)
    pb = ProgramBuilder()
    p = pb.add_vars("p", G)
    total = LinExpr.constant(-1.0)
    for g in range(G):
        total = total + LinExpr.var(p[g])
    pb.add_zero(total)
    pb.add_nonneg(*[LinExpr.var(p[g]) for g in range(G)])
    for i in range(spec.n_templates):
        e = LinExpr.constant(float(sig[i]))
        for g in range(G):
            if gvals[i, g] != 0.0:
                e = e + LinExpr.var(p[g]).scaled(-float(gvals[i, g]))
        pb.add_nonneg(e)
    obj = LinExpr()
    for g in range(G):
        if cost_vals[g] != 0.0:
            obj = obj + LinExpr.var(p[g]).scaled(-float(cost_vals[g]))
    pb.set_objective(obj)
    sol = solve(pb.build().instantiate(np.zeros(0)), settings or SolverSettings())
    if sol.status is not Status.OPTIMAL:
        return -np.inf
    return -sol.objective_value + inst.cost.first_stage(x)


def box_support_max(inst: DROInstance, x, lo, hi) -> float:
    """sup over y in the box of c(x, y), exact for max-affine costs."""
    cost = as_max_affine(inst.cost)
    x = np.asarray(x, dtype=float)
    best = -np.inf
    for k in range(cost.pieces.n_pieces):
        beta = cost.pieces.beta_lin[k] @ x + cost.pieces.beta_const[k]
        val = cost.pieces.alpha_lin[k] @ x + cost.pieces.alpha_const[k]
        val += np.sum(np.where(beta >= 0, beta * hi, beta * lo))
        best = max(best, val)
    return float(best + cost.first_stage(x))
