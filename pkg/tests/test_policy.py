import numpy as np
import pytest

from nearpg.errors import InvalidArgumentError
from nearpg.policy import (Policy, constant, forward_batch, init_mlp, linear_gain, load_policy, mlp_weights,
                           save_policy)


class TestForward:
    def test_linear_gain(self):
        assert linear_gain(0.5).forward([2.0])[0] == 1.0

    def test_constant_ignores_state(self):
        p = constant(0.7)
        assert p.forward([3.0])[0] == 0.7
        assert p.forward([-8.0])[0] == 0.7

    def test_zero_mlp(self):
        p = Policy("mlp", 2, 1, np.zeros(init_mlp(2, 1, 4).d_Theta), hidden=4)
        assert p.forward([1.0, -2.0])[0] == 0.0

    def test_mlp_matches_explicit_layers(self, small_mlp, rng):
        W1, b1, W2, b2 = mlp_weights(small_mlp)
        s = rng.normal(size=2)
        want = W2 @ np.maximum(W1 @ s + b1, 0.0) + b2
        np.testing.assert_allclose(small_mlp.forward(s), want, rtol=1e-14)

    def test_dimension_mismatch(self, small_mlp):
        with pytest.raises(InvalidArgumentError):
            small_mlp.forward([1.0, 2.0, 3.0])

    def test_wrong_parameter_count(self):
        with pytest.raises(InvalidArgumentError):
            Policy("linear_gain", 2, 1, np.zeros(3))

    def test_batch_rows_independent_of_batch(self, small_mlp, rng):
        s = rng.normal(size=(300, 2))
        a_all, _ = forward_batch(small_mlp, small_mlp.theta, s)
        a_one, _ = forward_batch(small_mlp, small_mlp.theta, s[17:18])
        assert a_all[17, 0] == a_one[0, 0]


class TestJacobians:
    def test_linear_gain(self):
        j = linear_gain(0.25).jacobians([3.0])
        assert j.d_theta.tolist() == [[3.0]]
        assert j.d_state.tolist() == [[0.25]]

    def test_constant(self):
        j = constant(0.7).jacobians([3.0])
        assert j.d_theta.tolist() == [[1.0]]
        assert j.d_state.tolist() == [[0.0]]

    @staticmethod
    def _near_kink(p, s, h=1e-6):
        W1, b1, _, _ = mlp_weights(p)
        return np.any(np.abs(W1 @ s + b1) < 1e-4)

    def test_mlp_matches_central_differences(self, rng):
        h = 1e-6
        checked = 0
        for trial in range(100):
            d_S, d_A, H = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(2, 7))
            p = init_mlp(d_S, d_A, H, seed=trial)
            s = rng.normal(size=d_S)
            if self._near_kink(p, s):
                continue
            j = p.jacobians(s)
            for k in range(p.d_Theta):
                e = np.zeros(p.d_Theta)
                e[k] = h
                fd = (p.perturb(e).forward(s) - p.perturb(-e).forward(s)) / (2 * h)
                np.testing.assert_allclose(j.d_theta[:, k], fd, rtol=1e-5, atol=1e-8)
            for k in range(d_S):
                e = np.zeros(d_S)
                e[k] = h
                fd = (p.forward(s + e) - p.forward(s - e)) / (2 * h)
                np.testing.assert_allclose(j.d_state[:, k], fd, rtol=1e-5, atol=1e-8)
            checked += 1
        assert checked > 80

    def test_relu_kink_subgradient_is_zero(self):
        # hidden pre-activation exactly 0: W1 = 0, b1 = 0
        theta = np.zeros(init_mlp(1, 1, 2).d_Theta)
        theta[4:6] = 1.0  # W2
        p = Policy("mlp", 1, 1, theta, hidden=2)
        j = p.jacobians([0.0])
        assert np.all(j.d_state == 0.0)
        assert np.all(j.d_theta[0, :4] == 0.0)


class TestPerturb:
    def test_zero_delta(self, small_mlp, rng):
        q = small_mlp.perturb(np.zeros(small_mlp.d_Theta))
        s = rng.normal(size=2)
        assert np.array_equal(q.forward(s), small_mlp.forward(s))

    def test_round_trip_bit_exact_when_sum_is_exact(self, rng):
        theta = rng.integers(-2 ** 20, 2 ** 20, size=33) * 2.0 ** -20
        delta = rng.integers(-2 ** 20, 2 ** 20, size=33) * 2.0 ** -20
        p = init_mlp(2, 1, 8).with_theta(theta)
        assert np.array_equal(p.perturb(delta).perturb(-delta).theta, theta)

    def test_round_trip_within_one_rounding(self, small_mlp, rng):
        delta = rng.normal(size=small_mlp.d_Theta)
        back = small_mlp.perturb(delta).perturb(-delta).theta
        assert np.all(np.abs(back - small_mlp.theta) <= np.spacing(np.abs(small_mlp.theta) + np.abs(delta)))

    def test_shift(self):
        assert linear_gain(0.0).perturb([1e-3]).forward([1.0])[0] == 1e-3

    def test_input_unmodified(self, small_mlp):
        before = small_mlp.theta.copy()
        small_mlp.perturb(np.ones(small_mlp.d_Theta))
        assert np.array_equal(small_mlp.theta, before)

    def test_length_mismatch(self, small_mlp):
        with pytest.raises(InvalidArgumentError):
            small_mlp.perturb([1.0])


class TestStorage:
    def test_flat_layout_round_trip(self, small_mlp):
        W1, b1, W2, b2 = mlp_weights(small_mlp)
        flat = np.concatenate([W1.ravel(), b1, W2.ravel(), b2])
        assert np.array_equal(flat, small_mlp.theta)

    def test_checkpoint_round_trip(self, tmp_path, small_mlp):
        path = tmp_path / "policy.txt"
        save_policy(small_mlp, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "mlp 2 8 1"
        q = load_policy(path)
        assert np.array_equal(q.theta, small_mlp.theta)
        assert (q.family, q.d_S, q.d_A, q.hidden) == ("mlp", 2, 1, 8)

    def test_theta_is_read_only(self, small_mlp):
        with pytest.raises(ValueError):
            small_mlp.theta[0] = 1.0


def test_mlp_lipschitz_bound(rng):
    for seed in range(20):
        p = init_mlp(2, 1, 6, seed=seed)
        W1, _, W2, _ = mlp_weights(p)
        L = np.linalg.norm(W2, 2) * np.linalg.norm(W1, 2)
        for _ in range(10):
            s, t = rng.normal(size=2), rng.normal(size=2)
            assert np.linalg.norm(p.forward(s) - p.forward(t)) <= L * np.linalg.norm(s - t) + 1e-12


def test_init_is_seedable():
    assert np.array_equal(init_mlp(2, 1, 8, seed=4).theta, init_mlp(2, 1, 8, seed=4).theta)
    assert not np.array_equal(init_mlp(2, 1, 8, seed=4).theta, init_mlp(2, 1, 8, seed=5).theta)
    lim = 1 / np.sqrt(2)
    W1, b1, _, _ = mlp_weights(init_mlp(2, 1, 100, seed=0))
    assert np.all(np.abs(W1) <= lim) and np.all(np.abs(b1) <= lim)
