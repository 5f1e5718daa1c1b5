import json
import math

import numpy as np
import pytest

from nearpg.dynamics import linear_testbed, pendulum_system
from nearpg.errors import InvalidArgumentError
from nearpg.policy import constant, init_mlp
from nearpg.verify import (PENDULUM_LAMBDAS, analytic_gradient_linear, chisq_tail_bound, chisq_tail_check,
                           fd_remainder_check, gaussian_tail_bound, gaussian_tail_check, score_identity_check,
                           subgaussian_fit)
from nearpg import verify as _verify
from tests.test_estimators import quadratic_system


class TestClosedForms:
    def test_examples(self):
        assert analytic_gradient_linear("MB", 2.0, 5, 0.0, 0.5) == 6.0
        assert analytic_gradient_linear("PG", 2.0, 4, 0.0, 1.0) == 4.0
        assert analytic_gradient_linear("FD", 2.0, 5, 0.0, 0.0) == 0.0

    def test_short_horizon(self):
        with pytest.raises(InvalidArgumentError):
            analytic_gradient_linear("MB", 2.0, 3, 0.0, 1.0)

    def test_oracle_check(self):
        r = _verify.testbed_oracle_check(200, seed=4)
        assert r.passed, r.observed


class TestRemainder:
    def test_quadratic_zero(self):
        r = fd_remainder_check(quadratic_system(), constant(1.0), [1e-3, 1e-2, 1e-1])
        assert r.passed and max(r.observed) <= 1e-12

    def test_fd_testbed_linear(self):
        beta, T = 1.5, 5
        c = beta ** (T - 2)
        lams = [1e-3 / c, 1e-2 / c, 1e-1 / c]
        r = fd_remainder_check(linear_testbed("FD", beta, 0.0, T), constant(0.0, 2), lams)
        assert r.passed
        for rem, lam in zip(r.observed, sorted(lams)):
            assert rem / lam == pytest.approx(c * c, rel=1e-10)

    def test_pendulum_halving(self):
        r = fd_remainder_check(pendulum_system(0.0), init_mlp(2, 1, 8, seed=0), PENDULUM_LAMBDAS)
        assert r.passed
        assert r.details["worst_ratio"] <= 0.6


class TestScoreIdentity:
    @pytest.mark.parametrize("family", ["gaussian", "laplace", "logistic"])
    def test_passes(self, family):
        assert score_identity_check(family, 10 ** 5, 0).passed

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            score_identity_check("cauchy", 10 ** 5, 0)
        with pytest.raises(InvalidArgumentError):
            score_identity_check("gaussian", 100, 0)


class TestTails:
    def test_gaussian_constants(self):
        assert gaussian_tail_bound(0.0, 1.0) == pytest.approx(0.6577, abs=1e-4)
        assert gaussian_tail_bound(1.0, 1.0) == pytest.approx(0.24197, abs=1e-5)
        assert gaussian_tail_bound(1.0, 2.0) == gaussian_tail_bound(0.5, 1.0)

    def test_gaussian_check(self):
        r = gaussian_tail_check(1.0, [0.0, 1.0], 10 ** 5, 0)
        assert r.passed and r.observed[0] == 1.0
        assert r.details["exact"][1] == pytest.approx(0.31731, abs=1e-5)

    def test_chisq_constants(self):
        assert chisq_tail_bound(10, 0.0) == pytest.approx(0.0303, abs=1e-4)
        assert chisq_tail_bound(2, 1.0) == pytest.approx(math.exp(-1) / (2 * math.e ** 2), rel=1e-14)
        assert chisq_tail_bound(4, 0.5) > chisq_tail_bound(4, 1.0)

    def test_chisq_check(self):
        r = chisq_tail_check(2, [1.0], 10 ** 5, 0)
        assert r.passed and r.details["exact"][0] == pytest.approx(math.exp(-2), rel=1e-12)

    def test_odd_dof(self):
        with pytest.raises(InvalidArgumentError):
            chisq_tail_check(3, [0.5], 10 ** 5, 0)


class TestSubGaussian:
    def test_standard_normal(self):
        x = np.random.default_rng(1).standard_normal(10 ** 6)
        assert abs(subgaussian_fit(x) - 1.0) <= 0.1

    def test_zeros(self):
        assert subgaussian_fit(np.zeros(10 ** 4)) == 1e-12

    def test_scaling(self):
        x = np.random.default_rng(2).standard_normal(10 ** 5)
        ratio = subgaussian_fit(3 * x) / (3 * subgaussian_fit(x))
        step = 10 ** (1 / 200)
        assert 1 / step <= ratio <= step

    def test_too_few(self):
        with pytest.raises(InvalidArgumentError):
            subgaussian_fit(np.ones(10))


def test_result_json():
    r = score_identity_check("gaussian", 10 ** 4, 3)
    rec = json.loads(r.to_json())
    assert rec["name"] == "score_identity[gaussian]" and rec["seed"] == 3 and rec["samples_used"] == 10 ** 4
