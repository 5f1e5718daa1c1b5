"""Deterministic parameterized policies with exact Jacobians.

Three families are supported:

``linear_gain``
    ``a = K s`` with ``theta = K`` flattened row-major (``d_A x d_S``).
``constant``
    ``a = theta`` (length ``d_A``), independent of the state.
``mlp``
    ``a = W2 relu(W1 s + b1) + b2``. The flat parameter vector is laid out as
    W1 (row-major), b1, W2 (row-major), b2.

The batched functions accept ``theta`` either as one shared vector of shape
``(d_Theta,)`` or as one vector per row, shape ``(B, d_Theta)``. All
contractions are reductions over a trailing contiguous axis, so the value
computed for a row never depends on how many other rows share the batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from . import rng as _rng

FAMILIES = ("linear_gain", "constant", "mlp")


def n_params(family: str, d_S: int, d_A: int, hidden: int = 0) -> int:
    if family == "linear_gain":
        return d_A * d_S
    if family == "constant":
        return d_A
    if family == "mlp":
        return hidden * d_S + hidden + d_A * hidden + d_A
    raise InvalidArgumentError(f"unknown policy family {family!r}")


@dataclass(frozen=True)
class PolicyJacobians:
    d_theta: np.ndarray  # (d_A, d_Theta)
    d_state: np.ndarray  # (d_A, d_S)


@dataclass(frozen=True, eq=False)
class Policy:
    family: str
    d_S: int
    d_A: int
    theta: np.ndarray
    hidden: int = 0
    _layout: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown policy family {self.family!r}")
        if self.family == "mlp" and self.hidden < 1:
            raise InvalidArgumentError("mlp policies need hidden >= 1")
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        expected = n_params(self.family, self.d_S, self.d_A, self.hidden)
        if theta.shape[0] != expected:
            raise InvalidArgumentError(
                f"{self.family} policy with layout ({self.d_S}, {self.hidden}, {self.d_A}) "
                f"needs {expected} parameters, got {theta.shape[0]}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        H, dS, dA = self.hidden, self.d_S, self.d_A
        object.__setattr__(self, "_layout", (H * dS, H * dS + H, H * dS + H + dA * H))

    @property
    def d_Theta(self) -> int:
        return self.theta.shape[0]

    def with_theta(self, theta) -> "Policy":
        return Policy(self.family, self.d_S, self.d_A, theta, self.hidden)

    def perturb(self, delta) -> "Policy":
        delta = np.asarray(delta, dtype=np.float64).reshape(-1)
        if delta.shape[0] != self.d_Theta:
            raise InvalidArgumentError(f"delta has length {delta.shape[0]}, expected {self.d_Theta}")
        return self.with_theta(self.theta + delta)

    def forward(self, s) -> np.ndarray:
        s = _as_state(self, s)
        a, _ = forward_batch(self, self.theta, s[None, :])
        return a[0]

    def jacobians(self, s) -> PolicyJacobians:
        s = _as_state(self, s)
        rows = np.repeat(s[None, :], self.d_A, axis=0)
        a, cache = forward_batch(self, self.theta, rows)
        g_theta, g_s = vjp_batch(self, self.theta, rows, cache, np.eye(self.d_A))
        return PolicyJacobians(d_theta=g_theta, d_state=g_s)

    def describe(self) -> dict:
        return {"family": self.family, "d_S": self.d_S, "d_A": self.d_A, "hidden": self.hidden}


def _as_state(policy: Policy, s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if s.shape[0] != policy.d_S:
        raise InvalidArgumentError(f"state has length {s.shape[0]}, expected {policy.d_S}")
    return s


def _dot_last(x, y) -> np.ndarray:
    """Contract the trailing axis of ``x * y`` after materializing it in C order."""
    return np.multiply(x, y, order="C").sum(axis=-1)


def _rows(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    return theta[None, :] if theta.ndim == 1 else theta


def _unpack_mlp(policy: Policy, theta: np.ndarray):
    th = _rows(theta)
    i1, i2, i3 = policy._layout
    H, dS, dA = policy.hidden, policy.d_S, policy.d_A
    W1 = th[:, :i1].reshape(-1, H, dS)
    b1 = th[:, i1:i2]
    W2 = th[:, i2:i3].reshape(-1, dA, H)
    b2 = th[:, i3:]
    return W1, b1, W2, b2


def forward_batch(policy: Policy, theta, s: np.ndarray):
    """Actions for states ``s`` of shape ``(B, d_S)``; returns ``(a, cache)``."""
    fam = policy.family
    if fam == "constant":
        th = _rows(theta)
        return np.broadcast_to(th, (s.shape[0], policy.d_A)).copy(), None
    if fam == "linear_gain":
        K = _rows(theta).reshape(-1, policy.d_A, policy.d_S)
        return _dot_last(K, s[:, None, :]), None
    W1, b1, W2, b2 = _unpack_mlp(policy, theta)
    z = b1 + _dot_last(W1, s[:, None, :])
    h = np.maximum(z, 0.0)
    a = b2 + _dot_last(W2, h[:, None, :])
    return a, (z, h)


def vjp_batch(policy: Policy, theta, s: np.ndarray, cache, g_a: np.ndarray):
    """Pull back action cotangents ``g_a`` (B, d_A) to ``(g_theta, g_s)``.

    ``g_theta`` has shape ``(B, d_Theta)`` and ``g_s`` shape ``(B, d_S)``. The ReLU
    derivative at exactly zero is taken as 0.
    """
    B = s.shape[0]
    fam = policy.family
    if fam == "constant":
        return np.array(g_a, dtype=np.float64, copy=True), np.zeros((B, policy.d_S))
    if fam == "linear_gain":
        K = _rows(theta).reshape(-1, policy.d_A, policy.d_S)
        g_theta = (g_a[:, :, None] * s[:, None, :]).reshape(B, -1)
        g_s = _dot_last(np.swapaxes(K, 1, 2), g_a[:, None, :])
        return g_theta, g_s
    W1, b1, W2, b2 = _unpack_mlp(policy, theta)
    z, h = cache
    g_W2 = g_a[:, :, None] * h[:, None, :]
    g_h = _dot_last(np.swapaxes(W2, 1, 2), g_a[:, None, :])
    g_z = g_h * (z > 0.0)
    g_W1 = g_z[:, :, None] * s[:, None, :]
    g_s = _dot_last(np.swapaxes(W1, 1, 2), g_z[:, None, :])
    g_theta = np.concatenate(
        [g_W1.reshape(B, -1), g_z, g_W2.reshape(B, -1), np.asarray(g_a, dtype=np.float64)], axis=1)
    return g_theta, g_s


def linear_gain(theta, d_S: int = 1, d_A: int = 1) -> Policy:
    return Policy("linear_gain", d_S, d_A, np.atleast_1d(np.asarray(theta, dtype=np.float64)))


def constant(theta, d_S: int = 1, d_A: int = 1) -> Policy:
    return Policy("constant", d_S, d_A, np.atleast_1d(np.asarray(theta, dtype=np.float64)))


def init_mlp(d_S: int, d_A: int, hidden: int = 100, seed: int = 0) -> Policy:
    """MLP with weights and biases uniform on +-1/sqrt(fan_in) of their layer."""
    g = _rng.generator(seed, _rng.INIT)
    b1_lim = 1.0 / math.sqrt(d_S)
    b2_lim = 1.0 / math.sqrt(hidden)
    parts = [
        g.uniform(-b1_lim, b1_lim, hidden * d_S),
        g.uniform(-b1_lim, b1_lim, hidden),
        g.uniform(-b2_lim, b2_lim, d_A * hidden),
        g.uniform(-b2_lim, b2_lim, d_A),
    ]
    return Policy("mlp", d_S, d_A, np.concatenate(parts), hidden)


def mlp_weights(policy: Policy):
    """Return (W1, b1, W2, b2) as separate arrays for an mlp policy."""
    W1, b1, W2, b2 = _unpack_mlp(policy, policy.theta)
    return W1[0], b1[0], W2[0], b2[0]


def save_policy(policy: Policy, path) -> None:
    """Write a plain-text checkpoint: a layout header, then one parameter per line."""
    lines = [f"{policy.family} {policy.d_S} {policy.hidden} {policy.d_A}"]
    lines += [format(float(x), ".17g") for x in policy.theta]
    Path(path).write_text("\n".join(lines) + "\n")


def load_policy(path) -> Policy:
    text = Path(path).read_text().split("\n")
    header = text[0].split()
    if len(header) != 4:
        raise InvalidArgumentError(f"malformed policy checkpoint header: {text[0]!r}")
    family, d_S, hidden, d_A = header[0], int(header[1]), int(header[2]), int(header[3])
    theta = np.array([float(x) for x in text[1:] if x.strip()])
    return Policy(family, d_S, d_A, theta, hidden)
