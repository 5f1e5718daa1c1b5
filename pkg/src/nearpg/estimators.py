"""Monte-Carlo estimators of the policy gradient.

``MB``
    Pathwise gradient: differentiate the simulated return through the known
    dynamics with the noise realization held fixed.
``PG``
    Score-function gradient of a Gaussian-perturbed policy, weighted by
    reward-to-go minus an optional state-value baseline.
``FD``
    Central finite differences of the simulated return, either along every
    basis direction or along random directions on the unit sphere.

Every estimator is built from a per-sample function that maps a contiguous
range of sample indices to a ``(count, d_Theta)`` array. Sample ``i`` always
draws the same random numbers, so results do not depend on how rows are
batched or how many worker threads are used.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng as _rng
from .dynamics import DynamicalSystem, NoiseSequence, simulate, sample_noise_batch
from .errors import InvalidArgumentError, UnsupportedOperationError
from .policy import Policy, _dot_last, forward_batch, vjp_batch

KINDS = ("MB", "PG", "FD")
BASELINES = ("none", "exact_analytic", "mc")
FD_MODES = ("basis", "sphere")


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator kind plus the options relevant to it.

    ``sigma_xi=None`` means "use the system's sigma_zeta" for PG.
    """
    kind: str = "MB"
    sigma_xi: Optional[float] = None
    baseline: str = "none"
    m_b: int = 16
    lam: float = 1e-3
    mode: str = "basis"
    crn: bool = False

    def __post_init__(self):
        kind = str(self.kind).upper()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise InvalidArgumentError(f"unknown estimator {self.kind!r}; expected one of {KINDS}")
        if self.baseline not in BASELINES:
            raise InvalidArgumentError(f"unknown baseline {self.baseline!r}; expected one of {BASELINES}")
        if self.mode not in FD_MODES:
            raise InvalidArgumentError(f"unknown FD mode {self.mode!r}; expected one of {FD_MODES}")
        if kind == "FD" and not self.lam > 0:
            raise InvalidArgumentError("lambda must be positive")
        if self.sigma_xi is not None and not self.sigma_xi > 0:
            raise InvalidArgumentError("sigma_xi must be positive")
        if self.m_b < 1:
            raise InvalidArgumentError("m_b must be at least 1")

    def describe(self) -> dict:
        """Options that matter for this kind, in a stable order."""
        if self.kind == "MB":
            return {}
        if self.kind == "PG":
            out = {"sigma_xi": self.sigma_xi, "baseline": self.baseline}
            if self.baseline == "mc":
                out["m_b"] = self.m_b
            return out
        return {"lambda": self.lam, "mode": self.mode, "crn": self.crn}

    def rollouts_per_sample(self, d_Theta: int) -> int:
        if self.kind == "FD":
            return 2 * d_Theta if self.mode == "basis" else 2
        return 1


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    grad: np.ndarray
    n_rollouts: int
    estimator: str
    config: dict
    seed: int
    baseline_rollouts: int = 0
    n: int = 1

    def to_json(self) -> str:
        record = {
            "estimator": self.estimator,
            "config": self.config,
            "seed": int(self.seed),
            "n": int(self.n),
            "n_rollouts": int(self.n_rollouts),
            "baseline_rollouts": int(self.baseline_rollouts),
            "grad": [float(g) for g in self.grad],
        }
        return json.dumps(record, indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# Shared helpers


def _check_compatible(system: DynamicalSystem, policy: Policy) -> None:
    if policy.d_S != system.d_S or policy.d_A != system.d_A:
        raise InvalidArgumentError(
            f"policy maps R^{policy.d_S} -> R^{policy.d_A} but the system has d_S={system.d_S}, d_A={system.d_A}")


def _bmv_T(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise ``v @ M`` for ``M`` of shape (B, m, k) and ``v`` of shape (B, m)."""
    return _dot_last(np.swapaxes(M, 1, 2), v[:, None, :])


def stable_mean(rows: np.ndarray) -> np.ndarray:
    """Mean over axis 0, shifted by the first row.

    Identical rows give back that row exactly, so a noise-free estimator
    returns the same bits for every sample count.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        raise InvalidArgumentError("cannot average zero samples")
    ref = rows[0]
    return ref + (rows - ref).sum(axis=0) / rows.shape[0]


def _chunks(start: int, count: int):
    pos, stop = start, start + count
    while pos < stop:
        upto = min(stop, (pos // _rng.CHUNK_ROWS + 1) * _rng.CHUNK_ROWS)
        yield pos, upto - pos
        pos = upto


def map_rows(fn: Callable[[int, int], np.ndarray], start: int, count: int, workers: int = 1) -> np.ndarray:
    """Evaluate ``fn(start, count)`` over aligned chunks and concatenate in index order."""
    parts = list(_chunks(start, count))
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: fn(*p), parts))
    else:
        results = [fn(*p) for p in parts]
    return np.concatenate(results, axis=0)


# --------------------------------------------------------------------------
# Model-based (pathwise)


def mb_batch(system: DynamicalSystem, policy: Policy, zetas: np.ndarray, theta=None) -> tuple[np.ndarray, np.ndarray]:
    """Pathwise gradients and returns for a batch of noise realizations.

    One forward pass stores the trajectory; one backward pass propagates
    ``g_s``, the derivative of the return-to-go with respect to the current
    state, and accumulates the parameter gradient. Returns ``(grads, J_hat)``.
    """
    if not system.has_jacobians:
        raise UnsupportedOperationError(f"{system.name} does not expose Jacobians; MB is unavailable")
    _check_compatible(system, policy)
    theta = policy.theta if theta is None else theta
    T, B = system.T, zetas.shape[0]
    s = np.broadcast_to(system.s0, (B, system.d_S)).copy()
    states, actions, caches = [], [], []
    J = np.zeros(B)
    for t in range(T):
        a, cache = forward_batch(policy, theta, s)
        states.append(s)
        actions.append(a)
        caches.append(cache)
        J = J + system.reward(t, s, a)
        s = system.transition(t, s, a) + zetas[:, t]
    g_s = np.zeros((B, system.d_S))
    g_theta = np.zeros((B, policy.d_Theta))
    for t in range(T - 1, -1, -1):
        jac = system.jacobians(t, states[t], actions[t])
        u_a = jac.dR_da + _bmv_T(jac.df_da, g_s)
        d_theta, d_state = vjp_batch(policy, theta, states[t], caches[t], u_a)
        g_theta = g_theta + d_theta
        g_s = jac.dR_ds + _bmv_T(jac.df_ds, g_s) + d_state
    return g_theta, J


def mb_single(system: DynamicalSystem, policy: Policy, noise: NoiseSequence) -> np.ndarray:
    zetas = np.asarray(noise.zetas, dtype=np.float64)
    if zetas.shape != (system.T, system.d_S):
        raise InvalidArgumentError(f"noise must have shape ({system.T}, {system.d_S}), got {zetas.shape}")
    return mb_batch(system, policy, zetas[None])[0][0]


def mb_rows(system, policy, seed: int, start: int, count: int) -> np.ndarray:
    noise = sample_noise_batch(system, _rng.derive_seed(seed, _rng.NOISE), count, start=start)
    return mb_batch(system, policy, noise.zetas)[0]


def estimate_mb(system: DynamicalSystem, policy: Policy, n: int, seed: int, workers: int = 1) -> GradientEstimate:
    _require_n(n)
    rows = map_rows(lambda a, c: mb_rows(system, policy, seed, a, c), 0, n, workers)
    return GradientEstimate(stable_mean(rows), n, "MB", {}, seed, 0, n)


# --------------------------------------------------------------------------
# Score-function estimator


def resolve_sigma_xi(system: DynamicalSystem, sigma_xi: Optional[float]) -> float:
    """Explicit action-noise scale, or the system's state-noise scale."""
    if sigma_xi is not None:
        if not sigma_xi > 0:
            raise InvalidArgumentError("sigma_xi must be positive")
        return float(sigma_xi)
    default = float(getattr(system, "sigma_zeta", 0.0))
    if not default > 0:
        raise InvalidArgumentError(
            "action noise required: the system has sigma_zeta = 0, so pass a positive sigma_xi")
    return default


def _mc_baseline(system, policy, t: int, s_t: np.ndarray, sigma_xi: float, m_b: int, seed: int,
                 start: int) -> np.ndarray:
    """Mean reward-to-go of ``m_b`` fresh rollouts restarted from each ``(s_t, t)``."""
    B = s_t.shape[0]
    rows = B * m_b
    width = system.d_S + system.d_A
    z = _rng.normal_rows(_rng.derive_seed(seed, _rng.BASELINE, t), start * m_b, rows, (system.T - t, width))
    scales = np.stack([np.asarray(system.noise_std(k), dtype=np.float64) for k in range(t, system.T)])
    zetas = np.zeros((rows, system.T, system.d_S))
    xis = np.zeros((rows, system.T, system.d_A))
    zetas[:, t:] = z[:, :, :system.d_S] * scales[None] + 0.0
    xis[:, t:] = z[:, :, system.d_S:] * sigma_xi + 0.0
    start_states = np.repeat(s_t, m_b, axis=0)
    tr = simulate(system, policy, zetas, xis, start_states=start_states, t0=t)
    return tr.J_hat.reshape(B, m_b).sum(axis=-1) / m_b


def pg_rows(system, policy, seed: int, start: int, count: int, sigma_xi: float,
            baseline: str = "none", m_b: int = 16) -> np.ndarray:
    """Single-sample score-function estimates for samples ``[start, start + count)``."""
    if baseline == "exact_analytic":
        # raises before any simulation when no closed form exists
        system.value_function(0, system.s0[None, :], policy, sigma_xi)
    noise = sample_noise_batch(system, _rng.derive_seed(seed, _rng.NOISE), count, sigma_xi, start=start)
    theta = policy.theta
    T = system.T
    s = np.broadcast_to(system.s0, (count, system.d_S)).copy()
    states, caches, rewards = [], [], []
    for t in range(T):
        mean_a, cache = forward_batch(policy, theta, s)
        a = mean_a + noise.xis[:, t]
        states.append(s)
        caches.append(cache)
        rewards.append(system.reward(t, s, a))
        s = system.transition(t, s, a) + noise.zetas[:, t]
    to_go = [None] * T
    acc = np.zeros(count)
    for t in range(T - 1, -1, -1):
        acc = rewards[t] + acc
        to_go[t] = acc
    grad = np.zeros((count, policy.d_Theta))
    inv_var = 1.0 / (sigma_xi * sigma_xi)
    for t in range(T):
        if baseline == "none":
            adv = to_go[t]
        elif baseline == "exact_analytic":
            adv = to_go[t] - system.value_function(t, states[t], policy, sigma_xi)
        else:
            adv = to_go[t] - _mc_baseline(system, policy, t, states[t], sigma_xi, m_b, seed, start)
        score, _ = vjp_batch(policy, theta, states[t], caches[t], noise.xis[:, t] * inv_var)
        grad = grad + adv[:, None] * score
    return grad


def baseline_rollout_count(system: DynamicalSystem, n: int, baseline: str, m_b: int) -> int:
    return n * system.T * m_b if baseline == "mc" else 0


def estimate_pg(system: DynamicalSystem, policy: Policy, n: int, seed: int, sigma_xi: Optional[float] = None,
                baseline: str = "none", m_b: int = 16, workers: int = 1) -> GradientEstimate:
    _require_n(n)
    _check_compatible(system, policy)
    cfg = EstimatorConfig("PG", sigma_xi=resolve_sigma_xi(system, sigma_xi), baseline=baseline, m_b=m_b)
    rows = map_rows(lambda a, c: pg_rows(system, policy, seed, a, c, cfg.sigma_xi, baseline, m_b), 0, n, workers)
    return GradientEstimate(stable_mean(rows), n, "PG", cfg.describe(), seed,
                            baseline_rollout_count(system, n, baseline, m_b), n)


# --------------------------------------------------------------------------
# Finite differences


def _returns(system, policy, zetas, theta_rows) -> np.ndarray:
    return simulate(system, policy, zetas, theta=theta_rows).J_hat


def fd_single(system: DynamicalSystem, policy: Policy, lam: float, direction, noise_plus: NoiseSequence,
              noise_minus: Optional[NoiseSequence] = None) -> float:
    """Central difference ``(J(theta + lam v) - J(theta - lam v)) / (2 lam)`` for one noise pair.

    ``noise_minus=None`` reuses ``noise_plus`` on both sides.
    """
    if not lam > 0:
        raise InvalidArgumentError("lambda must be positive")
    v = np.asarray(direction, dtype=np.float64).reshape(-1)
    if v.shape[0] != policy.d_Theta:
        raise InvalidArgumentError(f"direction has length {v.shape[0]}, expected {policy.d_Theta}")
    noise_minus = noise_plus if noise_minus is None else noise_minus
    zetas = np.stack([np.asarray(noise_plus.zetas), np.asarray(noise_minus.zetas)])
    thetas = np.stack([policy.theta + lam * v, policy.theta - lam * v])
    J = _returns(system, policy, zetas, thetas)
    return float((J[0] - J[1]) / (2.0 * lam))


def fd_rows(system, policy, seed: int, start: int, count: int, lam: float, mode: str = "basis",
            crn: bool = False) -> np.ndarray:
    """Single-sample finite-difference estimates for samples ``[start, start + count)``.

    In basis mode every coordinate of sample ``i`` uses its own pair of noise
    rows; with ``crn`` one shared sequence serves all coordinates and both sides.
    """
    if not lam > 0:
        raise InvalidArgumentError("lambda must be positive")
    d = policy.d_Theta
    theta = policy.theta
    if crn:
        shared = sample_noise_batch(system, _rng.derive_seed(seed, _rng.FD_SHARED), count, start=start).zetas

    def side_noise(tag, k):
        if crn:
            return shared
        return sample_noise_batch(system, _rng.derive_seed(seed, tag, k), count, start=start).zetas

    if mode == "basis":
        out = np.empty((count, d))
        for k in range(d):
            step = np.zeros(d)
            step[k] = lam
            zetas = np.concatenate([side_noise(_rng.FD_PLUS, k), side_noise(_rng.FD_MINUS, k)])
            thetas = np.concatenate([np.broadcast_to(theta + step, (count, d)),
                                     np.broadcast_to(theta - step, (count, d))])
            J = _returns(system, policy, zetas, thetas)
            out[:, k] = (J[:count] - J[count:]) / (2.0 * lam)
        return out
    if mode != "sphere":
        raise InvalidArgumentError(f"unknown FD mode {mode!r}")
    nu = _rng.unit_vectors(_rng.derive_seed(seed, _rng.FD_DIRECTION), start, count, d)
    zetas = np.concatenate([side_noise(_rng.FD_PLUS, 0), side_noise(_rng.FD_MINUS, 0)])
    thetas = np.concatenate([theta + lam * nu, theta - lam * nu])
    J = _returns(system, policy, zetas, thetas)
    return (d * (J[:count] - J[count:]) / (2.0 * lam))[:, None] * nu


def estimate_fd(system: DynamicalSystem, policy: Policy, n: int, lam: float, seed: int, mode: str = "basis",
                crn: bool = False, workers: int = 1) -> GradientEstimate:
    _require_n(n)
    _check_compatible(system, policy)
    cfg = EstimatorConfig("FD", lam=lam, mode=mode, crn=crn)
    rows = map_rows(lambda a, c: fd_rows(system, policy, seed, a, c, lam, mode, crn), 0, n, workers)
    return GradientEstimate(stable_mean(rows), n * cfg.rollouts_per_sample(policy.d_Theta), "FD",
                            cfg.describe(), seed, 0, n)


# --------------------------------------------------------------------------
# Dispatch


def _require_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise InvalidArgumentError("n must be a positive integer")


def resolved(system: DynamicalSystem, config: EstimatorConfig) -> EstimatorConfig:
    """Config with the PG action-noise default filled in."""
    if config.kind != "PG":
        return config
    return EstimatorConfig("PG", sigma_xi=resolve_sigma_xi(system, config.sigma_xi),
                           baseline=config.baseline, m_b=config.m_b)


def sample_rows(system: DynamicalSystem, policy: Policy, config: EstimatorConfig, seed: int, start: int,
                count: int, workers: int = 1) -> np.ndarray:
    """Single-sample estimates ``(count, d_Theta)`` for sample indices ``[start, start + count)``."""
    _check_compatible(system, policy)
    cfg = resolved(system, config)
    if cfg.kind == "MB":
        fn = lambda a, c: mb_rows(system, policy, seed, a, c)
    elif cfg.kind == "PG":
        fn = lambda a, c: pg_rows(system, policy, seed, a, c, cfg.sigma_xi, cfg.baseline, cfg.m_b)
    else:
        fn = lambda a, c: fd_rows(system, policy, seed, a, c, cfg.lam, cfg.mode, cfg.crn)
    return map_rows(fn, start, count, workers)


def estimate(system: DynamicalSystem, policy: Policy, config: EstimatorConfig, n: int, seed: int,
             workers: int = 1) -> GradientEstimate:
    _require_n(n)
    cfg = resolved(system, config)
    rows = sample_rows(system, policy, cfg, seed, 0, n, workers)
    return GradientEstimate(
        grad=stable_mean(rows),
        n_rollouts=n * cfg.rollouts_per_sample(policy.d_Theta),
        estimator=cfg.kind,
        config=cfg.describe(),
        seed=seed,
        baseline_rollouts=baseline_rollout_count(system, n, cfg.baseline, cfg.m_b) if cfg.kind == "PG" else 0,
        n=n,
    )
