import json

import numpy as np
import pytest

from nearpg import rng as _rng
from nearpg.dynamics import (FunctionalSystem, NoiseSequence, SystemJacobians, linear_testbed, pendulum_system,
                             sample_noise)
from nearpg.errors import InvalidArgumentError, UnsupportedOperationError
from nearpg.estimators import (EstimatorConfig, estimate, estimate_fd, estimate_mb, estimate_pg, fd_single,
                               mb_single, pg_rows, sample_rows, stable_mean)
from nearpg.policy import constant, init_mlp, linear_gain


def quadratic_system():
    """One step, reward -a^2, so J(theta) = -theta^2 for a constant policy."""
    def jac(t, s, a):
        B = s.shape[0]
        return SystemJacobians(np.zeros((B, 1, 1)), np.zeros((B, 1, 1)), np.zeros((B, 1)), -2.0 * a)
    return FunctionalSystem(1, 1, 1, (0.0,), f=lambda t, s, a: s, r=lambda t, s, a: -(a[:, 0] ** 2), jac=jac)


def first_step_noise(system, value):
    z = np.zeros((system.T, system.d_S))
    z[0, 0] = value
    return NoiseSequence(z, None, 0)


class TestPathwise:
    def test_mb_testbed_example(self):
        bed = linear_testbed("MB", 2.0, 0.0, 5)
        assert mb_single(bed, bed.policy(0.0), first_step_noise(bed, 0.5))[0] == 6.0

    def test_zero_reward(self):
        sys0 = FunctionalSystem(2, 1, 4, (0.1, 0.2), f=lambda t, s, a: s, r=lambda t, s, a: 0.0 * s[:, 0],
                                jac=lambda t, s, a: SystemJacobians(np.ones((s.shape[0], 2, 2)),
                                                                    np.ones((s.shape[0], 2, 1)),
                                                                    np.zeros((s.shape[0], 2)),
                                                                    np.zeros((s.shape[0], 1))))
        assert np.all(mb_single(sys0, init_mlp(2, 1, 3), sample_noise(sys0, 0)) == 0.0)

    def test_matches_shared_noise_fd(self):
        for trial in range(20):
            if trial % 2:
                system, policy = pendulum_system(1e-2), init_mlp(2, 1, 8, seed=trial)
            else:
                system = linear_testbed("MB", 1.1 + 0.04 * trial, 0.5, 6)
                policy = linear_gain(0.1 * trial - 1.0)
            noise = sample_noise(system, trial)
            g = mb_single(system, policy, noise)
            eye = np.eye(policy.d_Theta)
            fd = np.array([fd_single(system, policy, 1e-5, eye[k], noise) for k in range(policy.d_Theta)])
            assert np.max(np.abs(g - fd)) <= 1e-4 * np.max(np.abs(g))

    def test_requires_jacobians(self):
        sys1 = FunctionalSystem(1, 1, 1, (0.0,), f=lambda t, s, a: s, r=lambda t, s, a: s[:, 0])
        with pytest.raises(UnsupportedOperationError):
            estimate_mb(sys1, constant(0.0), 1, 0)

    def test_noise_free_n_independent(self, small_mlp):
        p = pendulum_system(0.0)
        a, b = estimate_mb(p, small_mlp, 1, 0), estimate_mb(p, small_mlp, 100, 0)
        assert np.array_equal(a.grad, b.grad)
        assert b.n_rollouts == 100

    def test_unbiased_at_zero(self):
        bed = linear_testbed("MB", 1.5, 0.1, 5)
        rows = sample_rows(bed, bed.policy(0.0), EstimatorConfig("MB"), 3, 0, 10 ** 5)[:, 0]
        assert abs(rows.mean()) <= 3 * rows.std() / np.sqrt(rows.size)

    def test_error_std(self):
        bed = linear_testbed("MB", 1.5, 0.1, 5)
        rows = sample_rows(bed, bed.policy(0.0), EstimatorConfig("MB"), 4, 0, 10 ** 5)[:, 0]
        assert abs(rows.std(ddof=1) / 0.675 - 1) <= 0.02

    def test_n_zero(self, mb_bed):
        with pytest.raises(InvalidArgumentError):
            estimate_mb(mb_bed, mb_bed.policy(0.0), 0, 0)


class TestScoreFunction:
    def test_closed_form_examples(self):
        from nearpg.verify import analytic_gradient_linear
        assert analytic_gradient_linear("PG", 2.0, 4, 0.0, 2.0) - 4.0 == 12.0
        assert analytic_gradient_linear("PG", 2.0, 4, 0.0, 1.0) - 4.0 == 0.0

    def test_matches_closed_form(self):
        bed = linear_testbed("PG", 2.0, 0.0, 4)
        est = pg_rows(bed, bed.policy(0.0), 0, 0, 1, 1.0, "exact_analytic")[0, 0]
        xi0 = sample_noise(bed, _rng.derive_seed(0, _rng.NOISE), 1.0, index=0).xis[0, 0]
        assert est == pytest.approx(4.0 * xi0 ** 2, rel=1e-12)

    def test_unbiased(self):
        bed = linear_testbed("PG", 1.2, 0.0, 6)
        rows = sample_rows(bed, bed.policy(0.0), EstimatorConfig("PG", 1.0, "exact_analytic"), 5, 0, 10 ** 6)[:, 0]
        assert abs(rows.mean() - 1.2 ** 4) <= 3 * rows.std() / 1e3

    def test_baseline_leaves_mean_unchanged(self):
        bed = linear_testbed("PG", 1.2, 0.0, 6)
        pol = bed.policy(0.0)
        a = sample_rows(bed, pol, EstimatorConfig("PG", 1.0, "none"), 6, 0, 10 ** 6)[:, 0]
        b = sample_rows(bed, pol, EstimatorConfig("PG", 1.0, "exact_analytic"), 7, 0, 10 ** 6)[:, 0]
        se = np.sqrt(a.var() / a.size + b.var() / b.size)
        assert abs(a.mean() - b.mean()) <= 4 * se

    def test_action_noise_required(self):
        bed = linear_testbed("PG", 1.2, 0.0, 6)
        with pytest.raises(InvalidArgumentError, match="action noise required"):
            estimate_pg(bed, bed.policy(0.0), 1, 0)

    def test_default_sigma_xi_is_sigma_zeta(self, small_mlp):
        p = pendulum_system(0.02)
        a = estimate_pg(p, small_mlp, 3, 0)
        b = estimate_pg(p, small_mlp, 3, 0, sigma_xi=0.02)
        assert np.array_equal(a.grad, b.grad)
        assert a.config["sigma_xi"] == 0.02

    def test_exact_baseline_unsupported(self, small_mlp):
        with pytest.raises(UnsupportedOperationError):
            estimate_pg(pendulum_system(0.02), small_mlp, 1, 0, baseline="exact_analytic")

    def test_mc_baseline_accounting(self):
        bed = linear_testbed("PG", 1.2, 0.0, 5)
        est = estimate_pg(bed, bed.policy(0.0), 10, 0, sigma_xi=1.0, baseline="mc", m_b=4)
        assert est.n_rollouts == 10 and est.baseline_rollouts == 10 * 5 * 4

    def test_mc_baseline_reduces_variance_on_testbed(self):
        bed = linear_testbed("PG", 1.2, 0.0, 6)
        pol = bed.policy(0.0)
        none = sample_rows(bed, pol, EstimatorConfig("PG", 1.0, "none"), 1, 0, 20000)[:, 0]
        mc = sample_rows(bed, pol, EstimatorConfig("PG", 1.0, "mc", m_b=16), 1, 0, 20000)[:, 0]
        assert mc.var() < none.var()
        assert abs(mc.mean() - 1.2 ** 4) <= 4 * mc.std() / np.sqrt(mc.size)


class TestFiniteDifference:
    def test_flat_objective(self):
        bed = linear_testbed("MB", 1.5, 0.0, 5)
        for lam in (1e-3, 0.1, 1.0):
            assert estimate_fd(bed, bed.policy(0.3), 4, lam, 0).grad[0] == 0.0

    def test_quadratic_exact(self):
        for lam in (1e-3, 0.25, 2.0):
            assert estimate_fd(quadratic_system(), constant(1.0), 1, lam, 0).grad[0] == pytest.approx(-2.0,
                                                                                                     rel=1e-12)

    def test_fd_testbed_bias(self):
        beta, T = 1.5, 5
        bed = linear_testbed("FD", beta, 0.0, T)
        c = beta ** (T - 2)
        for lam in (1e-3, 1e-2, 1e-1):
            lam = lam / c
            assert estimate_fd(bed, bed.policy(0.0), 1, lam, 0).grad[0] / lam == pytest.approx(c * c, rel=1e-10)

    def test_rollout_accounting(self, small_mlp):
        p = pendulum_system(0.01)
        assert estimate_fd(p, small_mlp, 5, 1e-3, 0).n_rollouts == 2 * 5 * small_mlp.d_Theta
        assert estimate_fd(p, small_mlp, 5, 1e-3, 0, mode="sphere").n_rollouts == 10
        assert estimate_fd(p, linear_gain([0.0, 0.0], 2, 1), 5, 1e-3, 0).n_rollouts == 20

    def test_bad_lambda(self, mb_bed):
        with pytest.raises(InvalidArgumentError):
            estimate_fd(mb_bed, mb_bed.policy(0.0), 1, 0.0, 0)

    def test_sphere_exact_on_quadratic_1d(self):
        # in one dimension the unit sphere is {-1, +1}, so the estimate is the central difference
        sys1 = quadratic_system()
        est = estimate_fd(sys1, constant(1.0), 1, 0.5, 0, mode="sphere")
        assert est.grad[0] == pytest.approx(-2.0, rel=1e-12)

    def test_crn_dominates(self):
        p = pendulum_system(1e-2)
        pol = linear_gain([-5.0, -1.0], 2, 1)
        shared = sample_rows(p, pol, EstimatorConfig("FD", lam=1e-3, crn=True), 0, 0, 10 ** 4)
        indep = sample_rows(p, pol, EstimatorConfig("FD", lam=1e-3, crn=False), 0, 0, 10 ** 4)
        assert np.all(shared.var(axis=0) <= indep.var(axis=0))


class TestDeterminism:
    @pytest.mark.parametrize("cfg", [EstimatorConfig("MB"), EstimatorConfig("PG", baseline="mc", m_b=2),
                                     EstimatorConfig("FD", mode="sphere"), EstimatorConfig("FD", crn=True)])
    def test_workers_do_not_change_results(self, cfg, small_mlp):
        p = pendulum_system(0.01)
        n = 4096 + 50 if cfg.kind != "PG" else 300
        a = estimate(p, small_mlp, cfg, n, 9, workers=1)
        b = estimate(p, small_mlp, cfg, n, 9, workers=3)
        assert np.array_equal(a.grad, b.grad)

    def test_stable_mean_of_identical_rows(self):
        row = np.array([0.1, 1 / 3, -7.25])
        assert np.array_equal(stable_mean(np.tile(row, (97, 1))), row)


def test_json_record(mb_bed):
    est = estimate_fd(mb_bed, mb_bed.policy(0.0), 3, 1e-2, 42, crn=True)
    rec = json.loads(est.to_json())
    assert rec["estimator"] == "FD" and rec["seed"] == 42 and rec["n_rollouts"] == 6
    assert rec["config"] == {"lambda": 1e-2, "mode": "basis", "crn": True}
    assert rec["baseline_rollouts"] == 0 and len(rec["grad"]) == 1


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        EstimatorConfig("XX")
    with pytest.raises(InvalidArgumentError):
        EstimatorConfig("PG", baseline="learned")
    with pytest.raises(InvalidArgumentError):
        EstimatorConfig("FD", lam=-1.0)
