"""Independent numerical checks of closed forms and concentration inequalities.

Each check returns a :class:`CheckResult` whose ``passed`` flag is a pure
function of the recorded observations and targets.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from . import rng as _rng
from .dynamics import DynamicalSystem, NoiseSequence, linear_testbed, phi, rollout, sample_noise
from .errors import InvalidArgumentError
from .estimators import fd_single, mb_single, pg_rows
from .policy import Policy

MARGIN_SIGMAS = 4.0
GAUSSIAN_TAIL_CONST = math.sqrt(math.e / (2.0 * math.pi))


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: list
    bound_or_target: list
    samples_used: int
    seed: int
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        rec = {"name": self.name, "passed": bool(self.passed), "observed": self.observed,
               "bound_or_target": self.bound_or_target, "samples_used": int(self.samples_used),
               "seed": int(self.seed), "details": self.details}
        return json.dumps(rec, sort_keys=True, default=float)


# --------------------------------------------------------------------------
# Closed forms on the linear testbeds


def analytic_gradient_linear(kind: str, beta: float, T: int, theta: float, noise_or_xi: float,
                             sigma_xi: float = 1.0) -> float:
    """Per-sample closed form for one testbed.

    * ``MB``: the pathwise gradient for first-step noise ``zeta``.
    * ``PG``: the single-sample estimate with the exact baseline for first
      action noise ``xi``; it does not depend on ``theta``.
    * ``FD``: the simulated return for first-step noise ``zeta``.
    """
    if T < 4:
        raise InvalidArgumentError("testbeds need T >= 4")
    kind = str(kind).upper()
    if kind == "MB":
        return (T - 2) * (beta + theta) ** (T - 3) * noise_or_xi
    if kind == "PG":
        return beta ** (T - 2) * noise_or_xi ** 2 / sigma_xi ** 2
    if kind == "FD":
        c = beta ** (T - 2)
        return c * noise_or_xi + phi(c * theta)
    raise InvalidArgumentError(f"unknown testbed kind {kind!r}")


def _first_step_noise(system: DynamicalSystem, value: float, coord: int = 0) -> NoiseSequence:
    z = np.zeros((system.T, system.d_S))
    z[0, coord] = value
    return NoiseSequence(z, None, 0)


def testbed_oracle_check(draws: int = 1000, seed: int = 0, rtol: float = 1e-10) -> CheckResult:
    """Simulated per-sample quantities against the closed forms on random testbeds."""
    g = _rng.generator(seed, _rng.CHECK, 0)
    worst = {"MB": 0.0, "PG": 0.0, "FD": 0.0, "FD_diff": 0.0}
    for _ in range(draws):
        beta = g.uniform(1.1, 2.0)
        T = int(g.integers(4, 9))
        c = beta ** (T - 2)

        mb = linear_testbed("MB", beta, 1.0, T)
        theta, zeta = g.uniform(-0.5, 0.5), g.normal()
        got = mb_single(mb, mb.policy(theta), _first_step_noise(mb, zeta))[0]
        worst["MB"] = max(worst["MB"], _rel(got, analytic_gradient_linear("MB", beta, T, theta, zeta)))

        pg = linear_testbed("PG", beta, 0.0, T)
        theta, sigma_xi = g.uniform(-1.0, 1.0), g.uniform(0.5, 2.0)
        row = int(g.integers(0, 2 ** 20))
        pseed = int(g.integers(0, 2 ** 63))
        got = pg_rows(pg, pg.policy(theta), pseed, row, 1, sigma_xi, "exact_analytic")[0, 0]
        xi0 = sample_noise(pg, _rng.derive_seed(pseed, _rng.NOISE), sigma_xi, index=row).xis[0, 0]
        worst["PG"] = max(worst["PG"], _rel(got, analytic_gradient_linear("PG", beta, T, theta, xi0, sigma_xi)))

        fd = linear_testbed("FD", beta, 1.0, T)
        theta, zeta = g.uniform(-2.0, 2.0) / c, g.normal()
        noise = _first_step_noise(fd, zeta)
        got = rollout(fd, fd.policy(theta), noise).J_hat
        worst["FD"] = max(worst["FD"], _rel(got, analytic_gradient_linear("FD", beta, T, theta, zeta)))
        lam = 1e-2 / c
        got = fd_single(fd, fd.policy(theta), lam, [1.0], noise)
        want = (analytic_gradient_linear("FD", beta, T, theta + lam, zeta)
                - analytic_gradient_linear("FD", beta, T, theta - lam, zeta)) / (2.0 * lam)
        worst["FD_diff"] = max(worst["FD_diff"], _rel(got, want))
    observed = [worst[k] for k in ("MB", "PG", "FD", "FD_diff")]
    return CheckResult("testbed_oracle", all(v <= rtol for v in observed), observed, [rtol] * 4, 4 * draws, seed,
                       {"order": ["MB", "PG", "FD", "FD_diff"]})


def _rel(got: float, want: float) -> float:
    got, want = float(got), float(want)
    if got == want:
        return 0.0
    return abs(got - want) / max(abs(want), 1e-300)


# --------------------------------------------------------------------------
# Finite-difference remainder


def fd_remainder_check(system: DynamicalSystem, policy: Policy, lambdas: Sequence[float], seed: int = 0,
                       min_slope: float = 0.9, zero_tol: float = 1e-12,
                       name: str = "fd_remainder") -> CheckResult:
    """Distance between central differences and the pathwise gradient as the step shrinks.

    Both use one shared noise sequence. Passes when the remainders are all
    negligible, or when they shrink at least linearly in the step size
    (log-log slope ``>= min_slope``). Reports ``c = max r / lambda`` and the
    largest ratio of remainders between consecutive steps.
    """
    lams = sorted(float(l) for l in lambdas)
    if not lams or lams[0] <= 0:
        raise InvalidArgumentError("lambdas must be positive")
    noise = sample_noise(system, _rng.derive_seed(seed, _rng.CHECK))
    exact = mb_single(system, policy, noise)
    eye = np.eye(policy.d_Theta)
    rem = []
    for lam in lams:
        fd = np.array([fd_single(system, policy, lam, eye[k], noise) for k in range(policy.d_Theta)])
        rem.append(float(np.sqrt(((fd - exact) ** 2).sum())))
    scale = max(1.0, float(np.sqrt((exact * exact).sum())))
    c = max(r / l for r, l in zip(rem, lams))
    ratios = [rem[i] / rem[i + 1] for i in range(len(lams) - 1) if rem[i + 1] > 0]
    if all(r <= zero_tol * scale for r in rem):
        passed, slope = True, math.inf
    elif len(lams) < 2 or min(rem) <= 0:
        passed, slope = False, math.nan
    else:
        slope = float(np.polyfit(np.log(lams), np.log(rem), 1)[0])
        passed = slope >= min_slope
    return CheckResult(name, passed, rem, [c * l for l in lams], 2 * policy.d_Theta * len(lams), seed,
                       {"lambdas": lams, "c": c, "slope": slope, "worst_ratio": max(ratios) if ratios else 0.0})


# --------------------------------------------------------------------------
# Score-function identity


def _score_terms(family: str, x: np.ndarray) -> np.ndarray:
    """``x * d/dx log p(x)`` for the unit-scale density of ``family``."""
    if family == "gaussian":
        return -x * x
    if family == "laplace":
        return -np.abs(x)
    if family == "logistic":
        return -x * np.tanh(0.5 * x)
    raise InvalidArgumentError(f"unsupported noise family {family!r}")


def score_identity_check(noise_family: str, n: int = 10 ** 6, seed: int = 0) -> CheckResult:
    """Monte-Carlo mean of ``xi * grad log p(xi)`` against its exact value -1."""
    if noise_family not in ("gaussian", "laplace", "logistic"):
        raise InvalidArgumentError(f"unsupported noise family {noise_family!r}")
    if n < 10 ** 4:
        raise InvalidArgumentError("score_identity_check needs n >= 10^4")
    g = _rng.generator(seed, _rng.CHECK, 1)
    draw = {"gaussian": g.standard_normal, "laplace": g.laplace, "logistic": g.logistic}[noise_family]
    terms = _score_terms(noise_family, draw(size=n))
    mean = float(terms.mean())
    tol = MARGIN_SIGMAS * float(terms.std(ddof=1)) / math.sqrt(n)
    return CheckResult(f"score_identity[{noise_family}]", abs(mean + 1.0) <= tol, [mean], [-1.0], n, seed,
                       {"tolerance": tol})


# --------------------------------------------------------------------------
# Tail lower bounds


def gaussian_tail_bound(t: float, sigma: float) -> float:
    return GAUSSIAN_TAIL_CONST * math.exp(-(t * t) / (sigma * sigma))


def _binomial_margin(p: float, n: int) -> float:
    return MARGIN_SIGMAS * math.sqrt(max(p * (1.0 - p), 0.0) / n)


def gaussian_tail_check(sigma: float = 1.0, t_values: Sequence[float] = (0.0, 0.5, 1.0, 2.0), n: int = 10 ** 6,
                        seed: int = 0) -> CheckResult:
    """Empirical two-sided Gaussian tails against ``sqrt(e / 2 pi) exp(-t^2 / sigma^2)``."""
    if not sigma > 0:
        raise InvalidArgumentError("sigma must be positive")
    if n < 10 ** 5:
        raise InvalidArgumentError("gaussian_tail_check needs n >= 10^5")
    x = np.abs(sigma * _rng.generator(seed, _rng.CHECK, 2).standard_normal(n))
    observed, bounds, exact = [], [], []
    ok = True
    for t in t_values:
        emp = float(np.count_nonzero(x >= t)) / n
        b = gaussian_tail_bound(t, sigma)
        ex = float(special.erfc(t / (sigma * math.sqrt(2.0))))
        ok &= emp >= b - _binomial_margin(b, n) and ex >= b
        observed.append(emp)
        bounds.append(b)
        exact.append(ex)
    return CheckResult("gaussian_tail", bool(ok), observed, bounds, n, seed,
                       {"sigma": sigma, "t_values": list(t_values), "exact": exact})


def chisq_tail_bound(n_dof: int, eps: float) -> float:
    return math.exp(-n_dof * eps / 2.0) / (math.e ** 2 * math.sqrt(2.0 * n_dof))


def chisq_tail_check(n_dof: int, eps_values: Sequence[float] = (0.5, 1.0), trials: int = 10 ** 6,
                     seed: int = 0) -> CheckResult:
    """Upper tail of the mean of ``n_dof`` squared standard normals against its lower bound."""
    if n_dof < 2 or n_dof % 2:
        raise InvalidArgumentError("n_dof must be a positive even integer")
    if trials < 10 ** 5:
        raise InvalidArgumentError("chisq_tail_check needs trials >= 10^5")
    z = _rng.generator(seed, _rng.CHECK, 3, n_dof).standard_normal((trials, n_dof))
    m = (z * z).sum(axis=1) / n_dof
    observed, bounds, exact = [], [], []
    ok = True
    for eps in eps_values:
        emp = float(np.count_nonzero(m >= 1.0 + eps)) / trials
        b = chisq_tail_bound(n_dof, eps)
        ex = float(stats.chi2.sf(n_dof * (1.0 + eps), n_dof))
        ok &= emp >= b - _binomial_margin(b, trials) and ex >= b
        observed.append(emp)
        bounds.append(b)
        exact.append(ex)
    return CheckResult(f"chisq_tail[n={n_dof}]", bool(ok), observed, bounds, trials, seed,
                       {"n_dof": n_dof, "eps_values": list(eps_values), "exact": exact})


# --------------------------------------------------------------------------
# Sub-Gaussian parameter fit

SUBGAUSS_FLOOR = 1e-12
SUBGAUSS_GRID_STEPS_PER_DECADE = 200


def subgaussian_fit(samples) -> float:
    """Smallest grid value ``s`` with ``E exp(tX) <= exp(s^2 t^2 / 2)`` at six probe points.

    Probes are ``t = +-0.5, +-1, +-2`` over the sample standard deviation. The
    grid is ``10^(k / 200)``, floored at ``1e-12``. This is an empirical
    diagnostic, not a certified parameter.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.shape[0] < 10 ** 4:
        raise InvalidArgumentError("subgaussian_fit needs at least 10^4 samples")
    s0 = float(x.std())
    if s0 == 0.0:
        return SUBGAUSS_FLOOR
    need = 0.0
    for c in (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0):
        t = c / s0
        log_mgf = special.logsumexp(t * x) - math.log(x.shape[0])
        need = max(need, 2.0 * log_mgf / (t * t))
    if need <= SUBGAUSS_FLOOR ** 2:
        return SUBGAUSS_FLOOR
    k = math.ceil(SUBGAUSS_GRID_STEPS_PER_DECADE * 0.5 * math.log10(need) - 1e-9)
    return max(10.0 ** (k / SUBGAUSS_GRID_STEPS_PER_DECADE), SUBGAUSS_FLOOR)


# --------------------------------------------------------------------------
# Default suite

# Steps inside the Taylor regime of the default width-8 pendulum policy: large
# enough to stay clear of roundoff, small enough not to cross ReLU kinks.
PENDULUM_LAMBDAS = (1e-4, 5e-5, 2.5e-5)


def run_all(seed: int = 0, n: int = 10 ** 6) -> list:
    """Every check at its default parameter points."""
    from .dynamics import pendulum_system
    from .policy import init_mlp

    results = [testbed_oracle_check(1000, seed)]
    fdt = linear_testbed("FD", 1.5, 0.0, 5)
    c = 1.5 ** 3
    results.append(fd_remainder_check(fdt, fdt.policy(0.0), [1e-3 / c, 1e-2 / c, 1e-1 / c], seed,
                                      name="fd_remainder[fd_testbed]"))
    pend = pendulum_system(0.0)
    results.append(fd_remainder_check(pend, init_mlp(2, 1, 8, seed=0), PENDULUM_LAMBDAS, seed,
                                      name="fd_remainder[pendulum]"))
    results.append(gaussian_tail_check(1.0, (0.0, 0.5, 1.0, 2.0), n, seed))
    for dof in (2, 10):
        results.append(chisq_tail_check(dof, (0.5, 1.0), n, seed))
    for fam in ("gaussian", "laplace", "logistic"):
        results.append(score_identity_check(fam, n, seed))
    return results
