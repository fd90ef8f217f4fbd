import numpy as np
import pytest

from drolayers.ambiguity import (
    INFEASIBLE,
    MARGINAL,
    STRICTLY_FEASIBLE,
    AmbiguitySpec,
    MomentTemplate,
    ThetaLengthMismatch,
    box_support,
    compile_lifted_support,
    membership_margin,
    slater_probe,
    theta_jacobians,
)


def l1_spec(K=2, lo=-10.0, hi=10.0):
    return AmbiguitySpec(box_support([lo] * K, [hi] * K),
                         [MomentTemplate("norm", K, p=1)])


def l2sq_spec(K=2, lo=-10.0, hi=10.0):
    return AmbiguitySpec(box_support([lo] * K, [hi] * K),
                         [MomentTemplate("norm_sq", K)])


def theta_of(spec, mu, sigma):
    th = np.zeros(spec.n_theta)
    th[spec.alpha_slice(0)] = mu
    th[spec.sigma_index(0)] = sigma
    return th


class TestCompileLiftedSupport:
    def test_one_norm_structure(self):
        spec = l1_spec()
        rep = compile_lifted_support(spec, theta_of(spec, [1.0, -2.0], 3.0))
        # box rows + (2K hinge rows + 1 sum row) as nonneg blocks, lifts added
        assert rep.n_y == 2 and rep.n_u == 1 and rep.n_v == 2
        kinds = [b.kind for b in rep.blocks]
        assert kinds.count("soc") == 0
        total_rows = sum(b.dim for b in rep.blocks)
        assert total_rows == 4 + 4 + 1

    def test_sq_norm_rotated_cone(self):
        spec = l2sq_spec()
        rep = compile_lifted_support(spec, theta_of(spec, [0.5, 0.5], 2.0))
        socs = [b for b in rep.blocks if b.kind == "soc"]
        assert len(socs) == 1 and socs[0].dim == 4  # (u+1, 2r1, 2r2, u-1)

    def test_theta_length_checked(self):
        spec = l1_spec()
        with pytest.raises(ThetaLengthMismatch):
            compile_lifted_support(spec, np.zeros(spec.n_theta + 1))

    def test_dirac_membership(self):
        # point mass at mu gives g = 0 <= sigma for any sigma >= 0
        for make, mu in [(l1_spec, [1.5, -0.5]), (l2sq_spec, [2.0, 0.25])]:
            spec = make()
            theta = theta_of(spec, mu, 0.0)
            rep = compile_lifted_support(spec, theta)
            point = np.concatenate([mu, [0.0]])  # u = g(mu) = 0
            assert membership_margin(rep, theta, point) >= -1e-9

    def test_membership_soundness_random(self, rng):
        # compiled membership (with lift search) agrees with direct evaluation
        for make in (l1_spec, l2sq_spec):
            spec = make()
            for _ in range(60):
                mu = rng.uniform(-2, 2, size=2)
                theta = theta_of(spec, mu, rng.uniform(0.1, 3.0))
                rep = compile_lifted_support(spec, theta)
                y = rng.uniform(-4, 4, size=2)
                g = spec.evaluate_g(0, y, theta)
                for du in (-0.2, 0.2):
                    u = g + du
                    margin = membership_margin(rep, theta, np.concatenate([y, [u]]))
                    if du > 0:
                        assert margin > 1e-8
                    else:
                        assert margin < -1e-8

    def test_combined_is_concatenation(self):
        # two-template spec compiles to the union of both constraint lists
        K = 2
        support = box_support([-10] * K, [10] * K)
        s1 = AmbiguitySpec(support, [MomentTemplate("norm", K, p=1)])
        s2 = AmbiguitySpec(support, [MomentTemplate("norm_sq", K)])
        s3 = AmbiguitySpec(support, [MomentTemplate("norm", K, p=1),
                                     MomentTemplate("norm_sq", K)])
        th1 = theta_of(s1, [0.0, 0.0], 1.0)
        th2 = theta_of(s2, [0.0, 0.0], 1.0)
        th3 = np.concatenate([th1, th2])
        r1 = compile_lifted_support(s1, th1)
        r2 = compile_lifted_support(s2, th2)
        r3 = compile_lifted_support(s3, th3)
        assert len(r3.blocks) == len(r1.blocks) + len(r2.blocks) - 1  # shared support
        assert sum(b.dim for b in r3.blocks) == (
            sum(b.dim for b in r1.blocks) + sum(b.dim for b in r2.blocks)
            - r1.blocks[0].dim)


class TestSlaterProbe:
    def test_positive_sigma_strict(self):
        spec = l2sq_spec()
        theta = theta_of(spec, [0.0, 0.0], 1.0)
        rep = compile_lifted_support(spec, theta)
        assert slater_probe(rep, theta, spec.sigma_values(theta)) == STRICTLY_FEASIBLE

    def test_zero_sigma_marginal(self):
        spec = l2sq_spec()
        theta = theta_of(spec, [0.0, 0.0], 0.0)
        rep = compile_lifted_support(spec, theta)
        assert slater_probe(rep, theta, spec.sigma_values(theta)) == MARGINAL

    def test_negative_sigma_infeasible(self):
        spec = l1_spec()
        theta = theta_of(spec, [0.0, 0.0], -0.5)
        rep = compile_lifted_support(spec, theta)
        assert slater_probe(rep, theta, spec.sigma_values(theta)) == INFEASIBLE


class TestThetaJacobians:
    def test_one_norm_hinge_gradients(self):
        spec = l1_spec()
        theta = theta_of(spec, [1.0, 2.0], 3.0)
        rep = compile_lifted_support(spec, theta)
        jacs = theta_jacobians(rep, theta)
        # support block constant
        assert jacs[0]["A"] == {} and jacs[0]["b"] == {}
        # hinge rows v_k -+ (y_k - mu_k) >= 0 carry +-1 offsets in mu
        grads = [g for blk in jacs[1:] for g in blk["b"].values()]
        weights = sorted(w for g in grads for w in g.values())
        assert weights == [-1.0, -1.0, 1.0, 1.0]

    def test_squared_matches_finite_differences(self, rng):
        spec = l2sq_spec()
        theta = theta_of(spec, [0.7, -0.3], 2.0)
        rep = compile_lifted_support(spec, theta)
        jacs = theta_jacobians(rep, theta)
        step = 1e-6
        for k in range(spec.n_theta):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += step
            tm[k] -= step
            mats_p = rep.block_matrices(tp)
            mats_m = rep.block_matrices(tm)
            for bi, ((_, Ap, bp), (_, Am, bm)) in enumerate(zip(mats_p, mats_m)):
                dA = (Ap - Am) / (2 * step)
                db = (bp - bm) / (2 * step)
                for (r, c), g in jacs[bi]["A"].items():
                    assert dA[r, c] == pytest.approx(g.get(k, 0.0), abs=1e-8)
                for r, g in jacs[bi]["b"].items():
                    assert db[r] == pytest.approx(g.get(k, 0.0), abs=1e-8)

    def test_constant_rows_zero_gradient(self):
        spec = l2sq_spec()
        theta = theta_of(spec, [0.0, 0.0], 1.0)
        jacs = theta_jacobians(compile_lifted_support(spec, theta), theta)
        assert jacs[0] == {"A": {}, "b": {}}


class TestTemplateEvaluation:
    @pytest.mark.parametrize("kind,p", [("linear", 1), ("abs", 1), ("power", 2),
                                        ("sq_hinge", 1), ("norm", 1), ("norm", 2),
                                        ("norm_sq", 1)])
    def test_grad_alpha_finite_differences(self, rng, kind, p):
        K = 3
        t = MomentTemplate(kind, K, p=p)
        for _ in range(10):
            y = rng.standard_normal(K)
            alpha = rng.standard_normal(t.n_alpha) + 0.1
            g = t.grad_alpha(y, alpha)
            step = 1e-6
            for i in range(t.n_alpha):
                ap, am = alpha.copy(), alpha.copy()
                ap[i] += step
                am[i] -= step
                fd = (t.evaluate(y, ap) - t.evaluate(y, am)) / (2 * step)
                assert g[i] == pytest.approx(fd, abs=2e-5)

    def test_combinators(self, rng):
        K = 2
        sub1 = MomentTemplate("abs", K)
        sub2 = MomentTemplate("norm_sq", K)
        tmax = MomentTemplate("max_of", K, subs=(sub1, sub2))
        tsum = MomentTemplate("nonneg_sum", K, subs=(sub1, sub2), weights=(0.5, 2.0))
        y = rng.standard_normal(K)
        alpha = rng.standard_normal(tmax.n_alpha)
        a1, a2 = alpha[:sub1.n_alpha], alpha[sub1.n_alpha:]
        assert tmax.evaluate(y, alpha) == pytest.approx(
            max(sub1.evaluate(y, a1), sub2.evaluate(y, a2)))
        assert tsum.evaluate(y, alpha) == pytest.approx(
            0.5 * sub1.evaluate(y, a1) + 2.0 * sub2.evaluate(y, a2))

    def test_combinators_compile(self, rng):
        K = 2
        sub1 = MomentTemplate("abs", K)
        sub2 = MomentTemplate("norm_sq", K)
        for comb in (MomentTemplate("max_of", K, subs=(sub1, sub2)),
                     MomentTemplate("nonneg_sum", K, subs=(sub1, sub2), weights=(0.5, 2.0))):
            spec = AmbiguitySpec(box_support([-5, -5], [5, 5]), [comb])
            theta = np.zeros(spec.n_theta)
            theta[spec.alpha_slice(0)] = rng.standard_normal(comb.n_alpha) * 0.3
            rep = compile_lifted_support(spec, theta)
            for _ in range(20):
                y = rng.uniform(-2, 2, size=K)
                g = spec.evaluate_g(0, y, theta)
                hi = membership_margin(rep, theta, np.concatenate([y, [g + 0.3]]))
                lo = membership_margin(rep, theta, np.concatenate([y, [g - 0.3]]))
                assert hi > 1e-8 and lo < -1e-8


class TestSerialization:
    def test_round_trip(self):
        spec = AmbiguitySpec(
            box_support([0.0, 0.0], [30.0, 25.0]),
            [MomentTemplate("norm", 2, p=1, sigma=1.5),
             MomentTemplate("norm_sq", 2, sigma=4.0)])
        back = AmbiguitySpec.from_json(spec.to_json())
        assert back.n_theta == spec.n_theta
        assert [t.kind for t in back.templates] == ["norm", "norm_sq"]
        assert back.templates[0].sigma == 1.5
        theta = np.arange(spec.n_theta, dtype=float)
        y = np.array([1.0, 2.0])
        for i in range(2):
            assert back.evaluate_g(i, y, theta) == spec.evaluate_g(i, y, theta)
