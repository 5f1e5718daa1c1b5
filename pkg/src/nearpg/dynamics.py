"""Finite-horizon dynamical systems with additive state noise.

A system evolves as ``s_{t+1} = f_t(s_t, a_t) + zeta_t`` for ``t = 0 .. T-1``
from a fixed initial state and collects ``R_t(s_t, a_t)`` at every step.
Transition, reward and Jacobian maps work on batches: states of shape
``(B, d_S)`` and actions of shape ``(B, d_A)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng as _rng
from .errors import InvalidArgumentError, UnsupportedOperationError
from .policy import Policy, constant, forward_batch, linear_gain


@dataclass(frozen=True)
class SystemJacobians:
    """Partial derivatives of f_t and R_t at a batch of (s, a) points."""
    df_ds: np.ndarray  # (B, d_S, d_S)
    df_da: np.ndarray  # (B, d_S, d_A)
    dR_ds: np.ndarray  # (B, d_S)
    dR_da: np.ndarray  # (B, d_A)


class DynamicalSystem:
    """Base class. Subclasses are frozen dataclasses and therefore immutable."""

    name = "system"
    d_S: int
    d_A: int
    T: int
    sigma_zeta: float

    @property
    def s0(self) -> np.ndarray:
        return np.array(self.initial_state, dtype=np.float64)

    def transition(self, t: int, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reward(self, t: int, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobians(self, t: int, s: np.ndarray, a: np.ndarray) -> SystemJacobians:
        raise UnsupportedOperationError(f"{self.name} does not expose Jacobians")

    @property
    def has_jacobians(self) -> bool:
        return False

    def noise_std(self, t: int) -> np.ndarray:
        """Per-coordinate standard deviation of the Gaussian noise added after step t."""
        return np.full(self.d_S, float(self.sigma_zeta))

    @property
    def deterministic(self) -> bool:
        return all(not np.any(self.noise_std(t)) for t in range(self.T))

    def value_function(self, t: int, s: np.ndarray, policy: Policy, sigma_xi: float) -> np.ndarray:
        """Closed-form value of the noisy-action policy from (s, t); testbeds only."""
        raise UnsupportedOperationError(f"{self.name} has no closed-form value function")

    def expected_gradient(self, policy: Policy) -> np.ndarray:
        raise UnsupportedOperationError(f"{self.name} has no closed-form policy gradient")

    def params(self) -> dict:
        return {"name": self.name}


# --------------------------------------------------------------------------
# Pendulum


@dataclass(frozen=True)
class PendulumSystem(DynamicalSystem):
    """Inverted pendulum, explicit Euler, state (angle from upright, angular velocity).

    No angle wrapping and no torque or velocity clipping, so the map is smooth.
    """
    sigma_zeta: float = 0.0
    T: int = 50
    g: float = 10.0
    m: float = 1.0
    l: float = 1.0
    dt: float = 0.05
    w_theta: float = 1.0
    w_omega: float = 0.1
    w_a: float = 0.01
    initial_state: tuple = (0.05, 0.0)
    d_S: int = field(default=2, init=False)
    d_A: int = field(default=1, init=False)
    name = "pendulum"

    def __post_init__(self):
        if not self.sigma_zeta >= 0:
            raise InvalidArgumentError("sigma_zeta must be non-negative")

    def transition(self, t, s, a):
        th, om = s[:, 0], s[:, 1]
        acc = 3.0 * self.g / (2.0 * self.l) * np.sin(th) + 3.0 / (self.m * self.l ** 2) * a[:, 0]
        om_next = om + acc * self.dt
        th_next = th + om_next * self.dt
        return np.stack([th_next, om_next], axis=1)

    def reward(self, t, s, a):
        th, om = s[:, 0], s[:, 1]
        return -(self.w_theta * th * th + self.w_omega * om * om + self.w_a * (a * a).sum(axis=1))

    @property
    def has_jacobians(self):
        return True

    def jacobians(self, t, s, a):
        B = s.shape[0]
        th, om = s[:, 0], s[:, 1]
        dt = self.dt
        dacc_dth = 3.0 * self.g / (2.0 * self.l) * np.cos(th)
        dacc_da = 3.0 / (self.m * self.l ** 2)
        df_ds = np.empty((B, 2, 2))
        df_ds[:, 1, 0] = dacc_dth * dt
        df_ds[:, 1, 1] = 1.0
        df_ds[:, 0, 0] = 1.0 + dt * df_ds[:, 1, 0]
        df_ds[:, 0, 1] = dt
        df_da = np.empty((B, 2, 1))
        df_da[:, 1, 0] = dacc_da * dt
        df_da[:, 0, 0] = dacc_da * dt * dt
        dR_ds = np.stack([-2.0 * self.w_theta * th, -2.0 * self.w_omega * om], axis=1)
        dR_da = -2.0 * self.w_a * a
        return SystemJacobians(df_ds, df_da, dR_ds, dR_da)

    def params(self):
        return {"name": self.name, "sigma_zeta": self.sigma_zeta}


def pendulum_system(sigma_zeta: float) -> PendulumSystem:
    if not sigma_zeta >= 0:
        raise InvalidArgumentError("sigma_zeta must be non-negative")
    return PendulumSystem(sigma_zeta=float(sigma_zeta))


# --------------------------------------------------------------------------
# Linear lower-bound testbeds


def phi(x):
    """Odd C^1 ramp: x|x| on [-1, 1), 2x - 1 above, 2x + 1 below."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 1.0, 2.0 * x - 1.0, np.where(x < -1.0, 2.0 * x + 1.0, x * np.abs(x)))
    return out if out.ndim else float(out)


def phi_prime(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.where((x >= 1.0) | (x < -1.0), 2.0, 2.0 * np.abs(x))
    return out if out.ndim else float(out)


def _terminal(t: int, T: int) -> float:
    return 1.0 if t == T - 1 else 0.0


@dataclass(frozen=True)
class _Testbed(DynamicalSystem):
    beta: float = 2.0
    sigma: float = 0.0
    T: int = 5

    def __post_init__(self):
        if self.T < 4:
            raise InvalidArgumentError("testbeds need T >= 4")
        if not self.sigma >= 0:
            raise InvalidArgumentError("sigma must be non-negative")

    @property
    def sigma_zeta(self) -> float:
        return float(self.sigma)

    @property
    def has_jacobians(self):
        return True

    def params(self):
        return {"name": self.name, "beta": self.beta, "sigma": self.sigma, "T": self.T}


@dataclass(frozen=True)
class MBTestbed(_Testbed):
    """f(s, a) = beta s + a, Gaussian noise on the first step only, reward s_{T-1}."""
    d_S: int = field(default=1, init=False)
    d_A: int = field(default=1, init=False)
    initial_state: tuple = field(default=(0.0,), init=False)
    name = "mb_testbed"

    def transition(self, t, s, a):
        return self.beta * s + a

    def reward(self, t, s, a):
        return _terminal(t, self.T) * s[:, 0]

    def jacobians(self, t, s, a):
        B = s.shape[0]
        return SystemJacobians(
            df_ds=np.full((B, 1, 1), float(self.beta)),
            df_da=np.ones((B, 1, 1)),
            dR_ds=np.full((B, 1), _terminal(t, self.T)),
            dR_da=np.zeros((B, 1)),
        )

    def noise_std(self, t):
        return np.array([self.sigma if t == 0 else 0.0])

    def policy(self, theta=0.0) -> Policy:
        return linear_gain(theta)

    def value_function(self, t, s, policy, sigma_xi):
        _require_family(policy, "linear_gain")
        gain = self.beta + policy.theta[0]
        return gain ** (self.T - 1 - t) * s[:, 0]

    def expected_gradient(self, policy):
        _require_family(policy, "linear_gain")
        return np.zeros(1)


@dataclass(frozen=True)
class PGTestbed(_Testbed):
    """Identity-plus-action first step, then s -> beta s; reward s_{T-1}.

    ``sigma`` injects first-step state noise, which leaves the policy gradient
    unchanged; the unperturbed system is noise free.
    """
    d_S: int = field(default=1, init=False)
    d_A: int = field(default=1, init=False)
    initial_state: tuple = field(default=(0.0,), init=False)
    name = "pg_testbed"

    def transition(self, t, s, a):
        return s + a if t == 0 else self.beta * s

    def reward(self, t, s, a):
        return _terminal(t, self.T) * s[:, 0]

    def jacobians(self, t, s, a):
        B = s.shape[0]
        first = t == 0
        return SystemJacobians(
            df_ds=np.full((B, 1, 1), 1.0 if first else float(self.beta)),
            df_da=np.full((B, 1, 1), 1.0 if first else 0.0),
            dR_ds=np.full((B, 1), _terminal(t, self.T)),
            dR_da=np.zeros((B, 1)),
        )

    def noise_std(self, t):
        return np.array([self.sigma if t == 0 else 0.0])

    def policy(self, theta=0.0) -> Policy:
        return constant(theta)

    def value_function(self, t, s, policy, sigma_xi):
        # Roll the noise-free remainder forward with the same arithmetic as
        # ``transition`` so that reward-to-go minus value cancels exactly.
        _require_family(policy, "constant")
        x = s[:, 0] + policy.theta[0] if t == 0 else s[:, 0]
        for _ in range(max(t, 1), self.T - 1):
            x = self.beta * x
        return x

    def expected_gradient(self, policy):
        _require_family(policy, "constant")
        return np.array([self.beta ** (self.T - 2)])


@dataclass(frozen=True)
class FDTestbed(_Testbed):
    """Two-coordinate system; the action enters the second coordinate on step 0.

    Reward at the last step is ``s + phi(s')``; the first coordinate receives
    Gaussian noise on step 0.
    """
    d_S: int = field(default=2, init=False)
    d_A: int = field(default=1, init=False)
    initial_state: tuple = field(default=(0.0, 0.0), init=False)
    name = "fd_testbed"

    def transition(self, t, s, a):
        if t == 0:
            return np.stack([s[:, 0], s[:, 1] + a[:, 0]], axis=1)
        return self.beta * s

    def reward(self, t, s, a):
        if t != self.T - 1:
            return np.zeros(s.shape[0])
        return s[:, 0] + phi(s[:, 1])

    def jacobians(self, t, s, a):
        B = s.shape[0]
        if t == 0:
            df_ds = np.broadcast_to(np.eye(2), (B, 2, 2)).copy()
            df_da = np.broadcast_to(np.array([[0.0], [1.0]]), (B, 2, 1)).copy()
        else:
            df_ds = np.broadcast_to(self.beta * np.eye(2), (B, 2, 2)).copy()
            df_da = np.zeros((B, 2, 1))
        if t == self.T - 1:
            dR_ds = np.stack([np.ones(B), phi_prime(s[:, 1])], axis=1)
        else:
            dR_ds = np.zeros((B, 2))
        return SystemJacobians(df_ds, df_da, dR_ds, np.zeros((B, 1)))

    def noise_std(self, t):
        return np.array([self.sigma if t == 0 else 0.0, 0.0])

    def policy(self, theta=0.0) -> Policy:
        return constant(theta, d_S=2)

    def expected_gradient(self, policy):
        _require_family(policy, "constant")
        c = self.beta ** (self.T - 2)
        return np.array([phi_prime(c * policy.theta[0]) * c])


def _require_family(policy: Policy, family: str) -> None:
    if policy.family != family:
        raise UnsupportedOperationError(f"closed form assumes a {family} policy, got {policy.family}")


_TESTBEDS = {"MB": MBTestbed, "PG": PGTestbed, "FD": FDTestbed}


def linear_testbed(kind: str, beta: float, sigma: float, T: int) -> DynamicalSystem:
    try:
        cls = _TESTBEDS[str(kind).upper()]
    except KeyError:
        raise InvalidArgumentError(f"unknown testbed kind {kind!r}; expected MB, PG or FD") from None
    return cls(beta=float(beta), sigma=float(sigma), T=int(T))


# --------------------------------------------------------------------------
# User-defined systems


@dataclass(frozen=True, eq=False)
class FunctionalSystem(DynamicalSystem):
    """System built from batched callables ``f(t, s, a)`` and ``r(t, s, a)``.

    ``jac`` is optional and must return a :class:`SystemJacobians`.
    """
    d_S: int
    d_A: int
    T: int
    initial_state: tuple
    f: Callable
    r: Callable
    sigma_zeta: float = 0.0
    jac: Optional[Callable] = None
    name: str = "functional"

    def transition(self, t, s, a):
        return self.f(t, s, a)

    def reward(self, t, s, a):
        return self.r(t, s, a)

    @property
    def has_jacobians(self):
        return self.jac is not None

    def jacobians(self, t, s, a):
        if self.jac is None:
            raise UnsupportedOperationError(f"{self.name} does not expose Jacobians")
        return self.jac(t, s, a)


# --------------------------------------------------------------------------
# Noise and rollouts


@dataclass(frozen=True, eq=False)
class NoiseSequence:
    zetas: np.ndarray            # (T, d_S)
    xis: Optional[np.ndarray]    # (T, d_A) or None
    seed: int
    index: int = 0


@dataclass(frozen=True, eq=False)
class NoiseBatch:
    zetas: np.ndarray            # (B, T, d_S)
    xis: Optional[np.ndarray]    # (B, T, d_A) or None
    seed: int
    start: int = 0

    def __len__(self):
        return self.zetas.shape[0]

    def row(self, i: int) -> NoiseSequence:
        xis = None if self.xis is None else self.xis[i]
        return NoiseSequence(self.zetas[i], xis, self.seed, self.start + i)


def _noise_scales(system: DynamicalSystem) -> np.ndarray:
    return np.stack([np.asarray(system.noise_std(t), dtype=np.float64) for t in range(system.T)])


def sample_noise_batch(system: DynamicalSystem, seed: int, count: int, sigma_xi: Optional[float] = None,
                       start: int = 0) -> NoiseBatch:
    """Rows ``[start, start + count)`` of the noise stream ``seed``.

    Each row draws ``T x (d_S + d_A)`` standard normals when action noise is
    requested and ``T x d_S`` otherwise; state noise is scaled by the system's
    per-step profile and action noise by ``sigma_xi``.
    """
    width = system.d_S + (system.d_A if sigma_xi is not None else 0)
    z = _rng.normal_rows(seed, start, count, (system.T, width))
    # adding 0.0 turns the -0.0 produced by zero scales into +0.0
    zetas = z[:, :, :system.d_S] * _noise_scales(system)[None] + 0.0
    xis = None
    if sigma_xi is not None:
        xis = z[:, :, system.d_S:] * float(sigma_xi) + 0.0
    return NoiseBatch(zetas, xis, int(seed), start)


def sample_noise(system: DynamicalSystem, seed: int, with_action_noise: Optional[float] = None,
                 index: int = 0) -> NoiseSequence:
    """One noise sequence; identical to row ``index`` of the batch stream ``seed``."""
    return sample_noise_batch(system, seed, 1, with_action_noise, start=index).row(0)


@dataclass(frozen=True, eq=False)
class Trajectories:
    """Batched rollout record; arrays cover steps ``t0 .. T-1``."""
    states: np.ndarray   # (B, T - t0, d_S)
    actions: np.ndarray  # (B, T - t0, d_A)
    rewards: np.ndarray  # (B, T - t0)
    J_hat: np.ndarray    # (B,)
    t0: int = 0


def simulate(system: DynamicalSystem, policy: Policy, zetas: np.ndarray, xis: Optional[np.ndarray] = None,
             theta=None, start_states: Optional[np.ndarray] = None, t0: int = 0) -> Trajectories:
    """Run a batch of rollouts.

    ``zetas`` and ``xis`` hold full-horizon noise, shape ``(B, T, .)``; only steps
    ``t0 .. T-1`` are used. ``theta`` may be shared or per-row. Returns are
    accumulated left to right.
    """
    T = system.T
    B = zetas.shape[0]
    if zetas.shape[1:] != (T, system.d_S):
        raise InvalidArgumentError(f"state noise must have shape (B, {T}, {system.d_S}), got {zetas.shape}")
    if xis is not None and xis.shape != (B, T, system.d_A):
        raise InvalidArgumentError(f"action noise must have shape ({B}, {T}, {system.d_A}), got {xis.shape}")
    if policy.d_S != system.d_S or policy.d_A != system.d_A:
        raise InvalidArgumentError("policy dimensions do not match the system")
    theta = policy.theta if theta is None else theta
    if start_states is None:
        s = np.broadcast_to(system.s0, (B, system.d_S)).copy()
    else:
        s = np.array(start_states, dtype=np.float64).reshape(B, system.d_S)
    steps = T - t0
    states = np.empty((B, steps, system.d_S))
    actions = np.empty((B, steps, system.d_A))
    rewards = np.empty((B, steps))
    J = np.zeros(B)
    for k, t in enumerate(range(t0, T)):
        a, _ = forward_batch(policy, theta, s)
        if xis is not None:
            a = a + xis[:, t]
        r = system.reward(t, s, a)
        states[:, k] = s
        actions[:, k] = a
        rewards[:, k] = r
        J = J + r
        s = system.transition(t, s, a) + zetas[:, t]
    return Trajectories(states, actions, rewards, J, t0)


@dataclass(frozen=True, eq=False)
class Rollout:
    states: np.ndarray
    actions: np.ndarray
    zetas: np.ndarray
    xis: Optional[np.ndarray]
    rewards: np.ndarray
    J_hat: float

    def to_csv(self) -> str:
        return rollout_csv(self)


def step(system: DynamicalSystem, t: int, s, a, zeta) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    zeta = np.asarray(zeta, dtype=np.float64).reshape(-1)
    if not 0 <= t < system.T:
        raise InvalidArgumentError(f"step index {t} outside [0, {system.T})")
    if s.shape[0] != system.d_S or zeta.shape[0] != system.d_S or a.shape[0] != system.d_A:
        raise InvalidArgumentError(
            f"expected state/noise of length {system.d_S} and action of length {system.d_A}")
    return system.transition(t, s[None, :], a[None, :])[0] + zeta


def rollout(system: DynamicalSystem, policy: Policy, noise: NoiseSequence) -> Rollout:
    zetas = np.asarray(noise.zetas, dtype=np.float64)
    if zetas.shape != (system.T, system.d_S):
        raise InvalidArgumentError(f"noise must have shape ({system.T}, {system.d_S}), got {zetas.shape}")
    xis = None if noise.xis is None else np.asarray(noise.xis, dtype=np.float64)
    tr = simulate(system, policy, zetas[None], None if xis is None else xis[None])
    return Rollout(tr.states[0], tr.actions[0], zetas, xis, tr.rewards[0], float(tr.J_hat[0]))


def rollout_csv(r: Rollout) -> str:
    d_S, d_A = r.states.shape[1], r.actions.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"s_{i + 1}" for i in range(d_S)] + [f"a_{i + 1}" for i in range(d_A)]
               + [f"zeta_{i + 1}" for i in range(d_S)] + ["reward"])
    for t in range(r.states.shape[0]):
        row = [t] + [repr(float(x)) for x in r.states[t]] + [repr(float(x)) for x in r.actions[t]]
        row += [repr(float(x)) for x in r.zetas[t]] + [repr(float(r.rewards[t]))]
        w.writerow(row)
    return buf.getvalue()


def expected_return(system: DynamicalSystem, policy: Policy, seed: int, count: int = 64) -> float:
    """Monte-Carlo J(theta): mean return over ``count`` rollouts of the stream ``seed``."""
    noise = sample_noise_batch(system, seed, count)
    J = simulate(system, policy, noise.zetas).J_hat
    return float(J.mean()) if np.all(np.isfinite(J)) else -math.inf
