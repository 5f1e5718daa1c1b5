"""Ground truths, error sweeps and empirical sample complexity."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .. import rng as _rng
from ..dynamics import DynamicalSystem
from ..errors import InvalidArgumentError
from ..estimators import EstimatorConfig, mb_rows, map_rows, resolved, sample_rows, stable_mean
from ..policy import Policy

QUANTILES = (0.05, 0.5, 0.95)
MIN_RELIABLE_REPEATS = 100


@dataclass(frozen=True, eq=False)
class GroundTruth:
    grad: np.ndarray
    stderr: np.ndarray
    method: str
    n_samples: int = 0


def ground_truth_gradient(system: DynamicalSystem, policy: Policy, method: str = "analytic", seed: int = 0,
                          N: int = 10 ** 6, workers: int = 1) -> GroundTruth:
    """Closed-form gradient on the testbeds, or a large-sample pathwise mean."""
    if method == "analytic":
        grad = np.asarray(system.expected_gradient(policy), dtype=np.float64)
        return GroundTruth(grad, np.zeros_like(grad), "analytic")
    if method != "mb_big_n":
        raise InvalidArgumentError(f"unknown ground-truth method {method!r}")
    if N < 1:
        raise InvalidArgumentError("N must be positive")
    seed = _rng.derive_seed(seed, _rng.GROUND_TRUTH)
    rows = map_rows(lambda a, c: mb_rows(system, policy, seed, a, c), 0, N, workers)
    grad = stable_mean(rows)
    stderr = (rows - rows[0]).std(axis=0, ddof=1) / math.sqrt(N) if N > 1 else np.zeros_like(grad)
    return GroundTruth(grad, stderr, f"mb_big_n({N})", N)


# --------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    residual: float


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> LogLogFit:
    """Least-squares line through ``(log x, log y)``; residual is the RMS misfit."""
    lx = np.log(np.asarray(x, dtype=np.float64))
    ly = np.log(np.asarray(y, dtype=np.float64))
    if lx.shape[0] < 2:
        raise InvalidArgumentError("need at least two points to fit a slope")
    if not np.all(np.isfinite(ly)):
        return LogLogFit(math.nan, math.nan, math.nan)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return LogLogFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid * resid))))


@dataclass
class SweepPoint:
    axis_value: float
    coords: list          # one dict per coordinate plus a final "norm" entry
    total_std: float      # sqrt of the summed per-coordinate variances
    repeats: int
    fail_fraction: Optional[float] = None
    fail_ci: Optional[tuple] = None
    truth: Optional[list] = None
    truth_stderr: Optional[list] = None


@dataclass
class SweepReport:
    axis: str
    points: list
    label: str = ""
    fit: Optional[LogLogFit] = None
    threshold: Optional[float] = None
    threshold_reached: Optional[bool] = None
    warnings: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def axis_values(self) -> list:
        return [p.axis_value for p in self.points]

    def total_stds(self) -> np.ndarray:
        return np.array([p.total_std for p in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis_value", "coord", "mean_err", "std_err", "q05", "q50", "q95"])
        for p in self.points:
            for c in p.coords:
                w.writerow([_fmt(p.axis_value), c["coord"]] + [_fmt(c[k]) for k in
                                                                ("mean", "std", "q05", "q50", "q95")])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "label": self.label,
            "config": self.config,
            "fit": None if self.fit is None else vars(self.fit),
            "threshold": self.threshold,
            "threshold_reached": self.threshold_reached,
            "warnings": list(self.warnings),
            "points": [
                {
                    "axis_value": p.axis_value,
                    "repeats": p.repeats,
                    "total_std": p.total_std,
                    "fail_fraction": p.fail_fraction,
                    "fail_ci": None if p.fail_ci is None else list(p.fail_ci),
                    "truth": p.truth,
                    "truth_stderr": p.truth_stderr,
                    "coords": p.coords,
                }
                for p in self.points
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)


def _fmt(x) -> str:
    return x if isinstance(x, str) else format(float(x), ".17g")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x)}")


def _error_stats(err: np.ndarray) -> tuple[list, float]:
    """Per-coordinate and norm statistics of an ``(R, d)`` error matrix."""
    coords = []
    for k in range(err.shape[1]):
        coords.append(_describe(err[:, k], str(k)))
    norms = np.sqrt((err * err).sum(axis=1))
    coords.append(_describe(norms, "norm"))
    var = err.var(axis=0, ddof=1) if err.shape[0] > 1 else np.zeros(err.shape[1])
    return coords, float(np.sqrt(var.sum()))


def _describe(x: np.ndarray, name: str) -> dict:
    q = np.quantile(x, QUANTILES)
    std = float(x.std(ddof=1)) if x.shape[0] > 1 else 0.0
    return {"coord": name, "mean": float(x.mean()), "std": std,
            "q05": float(q[0]), "q50": float(q[1]), "q95": float(q[2])}


def wilson_interval(failures: int, trials: int) -> tuple[float, float]:
    ci = stats.binomtest(int(failures), int(trials)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


# --------------------------------------------------------------------------
# Sample complexity


def empirical_sample_complexity(config: EstimatorConfig, system: DynamicalSystem, policy: Policy, epsilon: float,
                                delta: float, n_grid: Sequence[int], repeats: int, seed: int,
                                truth: Optional[np.ndarray] = None, workers: int = 1) -> SweepReport:
    """Failure probability ``Pr[|D_n - D*| >= epsilon]`` on a grid of sample sizes.

    Repeat ``r`` uses samples ``r * n_max .. r * n_max + n - 1`` of one stream,
    so the n-sample means along the grid are nested prefixes.
    """
    if not 0 < delta < 1:
        raise InvalidArgumentError("delta must lie in (0, 1)")
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    grid = [int(n) for n in n_grid]
    if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidArgumentError("n_grid must be strictly increasing positive integers")
    if repeats < 1:
        raise InvalidArgumentError("repeats must be positive")
    if truth is None:
        truth = ground_truth_gradient(system, policy, "analytic").grad
    truth = np.asarray(truth, dtype=np.float64)
    n_max = grid[-1]
    rows = sample_rows(system, policy, config, _rng.derive_seed(seed, _rng.REPEAT), 0, repeats * n_max, workers)
    rows = rows.reshape(repeats, n_max, -1)
    ref = rows[:, :1, :]
    prefix = np.cumsum(rows - ref, axis=1)
    points = []
    threshold = None
    for n in grid:
        means = ref[:, 0, :] + prefix[:, n - 1, :] / n
        err = means - truth
        coords, total = _error_stats(err)
        norms = np.sqrt((err * err).sum(axis=1))
        failures = int(np.count_nonzero(norms >= epsilon))
        ci = wilson_interval(failures, repeats)
        points.append(SweepPoint(float(n), coords, total, repeats, failures / repeats, ci))
        if threshold is None and ci[1] <= delta:
            threshold = n
    warnings = []
    if repeats < MIN_RELIABLE_REPEATS:
        warnings.append(f"only {repeats} repeats; failure probabilities are unreliable below "
                        f"{MIN_RELIABLE_REPEATS}")
    cfg = {"estimator": resolved(system, config).kind, **resolved(system, config).describe(),
           "epsilon": epsilon, "delta": delta, "repeats": repeats, "seed": seed, "system": system.params()}
    return SweepReport("n", points, label=resolved(system, config).kind, threshold=threshold,
                       threshold_reached=threshold is not None, warnings=warnings, config=cfg)


def geometric_grid(ratio: float, n_max: int) -> list:
    """Distinct values of ``round(ratio**k)`` up to ``n_max``."""
    if not ratio > 1:
        raise InvalidArgumentError("ratio must exceed 1")
    out, k = [], 0
    while True:
        v = int(round(ratio ** k))
        if v > n_max:
            return out
        if not out or v > out[-1]:
            out.append(v)
        k += 1


def gaussian_sample_complexity(std: float, epsilon: float, delta: float) -> float:
    """Smallest real ``n`` with ``Pr[|N(0, std^2 / n)| >= epsilon] = delta``."""
    z = stats.norm.isf(delta / 2.0)
    return (std * z / epsilon) ** 2


# --------------------------------------------------------------------------
# Noise-scale sweeps


def variance_sweep(configs: Mapping[str, EstimatorConfig], system_family: Callable[[float], DynamicalSystem],
                   sigmas: Sequence[float], policy: Policy, repeats: int, seed: int, truth: str = "analytic",
                   truth_n: int = 10 ** 5, workers: int = 1) -> dict:
    """Single-sample error statistics per estimator and noise scale, with a log-log fit of the std.

    Every noise scale reuses the same random streams, so errors at different
    scales are coupled sample by sample.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas or sigmas[0] <= 0 or any(b <= a for a, b in zip(sigmas, sigmas[1:])):
        raise InvalidArgumentError("sigma grid must be positive and strictly increasing")
    if repeats < 2:
        raise InvalidArgumentError("repeats must be at least 2")
    truths = {}
    for s in sigmas:
        system = system_family(s)
        truths[s] = ground_truth_gradient(system, policy, truth, seed=seed, N=truth_n, workers=workers)
    reports = {}
    for label, cfg in configs.items():
        stream = _rng.derive_seed(seed, _rng.REPEAT)
        points = []
        for s in sigmas:
            system = system_family(s)
            gt = truths[s]
            rows = sample_rows(system, policy, cfg, stream, 0, repeats, workers)
            coords, total = _error_stats(rows - gt.grad)
            points.append(SweepPoint(s, coords, total, repeats, truth=gt.grad.tolist(),
                                     truth_stderr=gt.stderr.tolist()))
        stds = [p.total_std for p in points]
        fit = fit_loglog(sigmas, stds) if len(sigmas) > 1 and min(stds) > 0 else None
        first = resolved(system_family(sigmas[0]), cfg)
        reports[label] = SweepReport("sigma_zeta", points, label=label, fit=fit,
                                     config={"estimator": first.kind, **cfg.describe(), "repeats": repeats,
                                             "seed": seed, "truth": truth})
    return reports
