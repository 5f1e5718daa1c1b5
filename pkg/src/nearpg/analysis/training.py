"""Stochastic gradient ascent on J(theta) and a grid search over its hyperparameters."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .. import rng as _rng
from ..dynamics import DynamicalSystem, expected_return
from ..errors import InvalidArgumentError
from ..estimators import EstimatorConfig, baseline_rollout_count, resolved, sample_rows
from ..policy import Policy

DEFAULT_EVAL_BATCH = 64


def theta_hash(theta: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(theta, dtype=np.float64).tobytes()).hexdigest()[:16]


def evaluate_J(system: DynamicalSystem, policy: Policy, eval_seed: int, batch: int = DEFAULT_EVAL_BATCH) -> float:
    """Mean return over a fixed batch of rollouts drawn from the evaluation stream."""
    with np.errstate(all="ignore"):
        return expected_return(system, policy, eval_stream(eval_seed), batch)


def eval_stream(eval_seed: int) -> int:
    return _rng.derive_seed(eval_seed, _rng.EVAL)


def train_stream(train_seed: int, step: int) -> int:
    return _rng.derive_seed(train_seed, _rng.TRAIN, step)


@dataclass(frozen=True)
class CurvePoint:
    step: int
    theta_hash: str
    J: float
    rollouts: int


@dataclass
class LearningCurve:
    points: list
    estimator: str
    config: dict
    learning_rate: float
    steps: int
    train_seed: int
    eval_seed: int
    converged: bool
    diverged: bool
    final_theta: np.ndarray
    train_seeds: list = field(default_factory=list, repr=False)
    eval_seeds: list = field(default_factory=list, repr=False)

    @property
    def initial_J(self) -> float:
        return self.points[0].J

    @property
    def final_J(self) -> float:
        """Last evaluated J, or -inf for a diverged run."""
        return -math.inf if self.diverged else self.points[-1].J

    @property
    def rollouts(self) -> int:
        return self.points[-1].rollouts

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "J", "rollouts"])
        for p in self.points:
            w.writerow([p.step, format(p.J, ".17g"), p.rollouts])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator, "config": self.config, "learning_rate": self.learning_rate,
            "steps": self.steps, "train_seed": self.train_seed, "eval_seed": self.eval_seed,
            "converged": self.converged, "diverged": self.diverged,
            "points": [vars(p) for p in self.points],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str)


def sgd_train(system: DynamicalSystem, policy: Policy, config: EstimatorConfig, steps: int, learning_rate: float,
              eval_every: int = 10, eval_seed: int = 0, train_seed: int = 1, eval_batch: int = DEFAULT_EVAL_BATCH,
              rollout_budget: Optional[int] = None) -> LearningCurve:
    """Ascend J with single-sample gradient estimates.

    Step ``i`` draws its estimate from the stream ``(train_seed, TRAIN, i)``;
    evaluations always use the stream derived from ``eval_seed``. A run is
    converged when every evaluation is finite and the last one is no worse
    than the first. A non-finite parameter or estimate stops the run and marks
    it diverged. With ``rollout_budget`` the run also stops before a step
    would exceed that many training rollouts.
    """
    if steps < 1:
        raise InvalidArgumentError("steps must be at least 1")
    if not learning_rate >= 0:
        raise InvalidArgumentError("learning_rate must be non-negative")
    if eval_every < 1:
        raise InvalidArgumentError("eval_every must be at least 1")
    cfg = resolved(system, config)
    per_step = cfg.rollouts_per_sample(policy.d_Theta)
    if cfg.kind == "PG":
        per_step += baseline_rollout_count(system, 1, cfg.baseline, cfg.m_b)
    used = 0
    diverged = False
    train_seeds = []
    points = [CurvePoint(0, theta_hash(policy.theta), evaluate_J(system, policy, eval_seed, eval_batch), 0)]
    done = 0
    with np.errstate(all="ignore"):
        for i in range(steps):
            if rollout_budget is not None and used + per_step > rollout_budget:
                break
            seed_i = train_stream(train_seed, i)
            train_seeds.append(seed_i)
            grad = sample_rows(system, policy, cfg, seed_i, 0, 1)[0]
            used += per_step
            theta = policy.theta + learning_rate * grad
            done = i + 1
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(theta))):
                diverged = True
                break
            policy = policy.with_theta(theta)
            if done % eval_every == 0 or done == steps:
                J = evaluate_J(system, policy, eval_seed, eval_batch)
                points.append(CurvePoint(done, theta_hash(policy.theta), J, used))
                if not math.isfinite(J):
                    diverged = True
                    break
    if not diverged and points[-1].step != done:
        points.append(CurvePoint(done, theta_hash(policy.theta), evaluate_J(system, policy, eval_seed, eval_batch),
                                 used))
    finite = all(math.isfinite(p.J) for p in points)
    converged = (not diverged) and finite and points[-1].J >= points[0].J
    return LearningCurve(points, cfg.kind, cfg.describe(), float(learning_rate), done, train_seed, eval_seed,
                         converged, diverged, policy.theta, train_seeds, [eval_stream(eval_seed)])


def warm_start(system: DynamicalSystem, policy: Policy, target: float = -100.0, lr: float = 1e-2,
               max_steps: int = 200, eval_seed: int = 0, train_seed: int = 0,
               eval_batch: int = DEFAULT_EVAL_BATCH) -> tuple[Policy, float]:
    """Pathwise ascent with step halving until the evaluated J reaches ``target``.

    Returns the policy and its evaluated J; the target may be missed if
    ``max_steps`` runs out.
    """
    J = evaluate_J(system, policy, eval_seed, eval_batch)
    cfg = EstimatorConfig("MB")
    with np.errstate(all="ignore"):
        for i in range(max_steps):
            if J >= target:
                break
            grad = sample_rows(system, policy, cfg, train_stream(train_seed, i), 0, 1)[0]
            step = lr
            while step > 1e-12:
                cand = policy.with_theta(policy.theta + step * grad)
                J_new = evaluate_J(system, cand, eval_seed, eval_batch)
                if math.isfinite(J_new) and J_new > J:
                    policy, J = cand, J_new
                    lr = min(2.0 * step, 1.0)
                    break
                step *= 0.5
    return policy, J


@dataclass
class SearchResult:
    best: dict
    best_score: float
    scores: list          # one dict per grid point: params, score, discarded count
    table: list           # one dict per (grid point, seed)
    budget_exhausted: bool

    def to_dict(self) -> dict:
        return {"best": self.best, "best_score": self.best_score, "scores": self.scores, "table": self.table,
                "budget_exhausted": self.budget_exhausted}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str)


_GRID_KEYS = {"lr": None, "lambda": "lam", "sigma_xi": "sigma_xi"}


def _median(values: Sequence[float]) -> float:
    vals = sorted(values)
    k = len(vals)
    if k == 0:
        return -math.inf
    if k % 2:
        return vals[k // 2]
    lo, hi = vals[k // 2 - 1], vals[k // 2]
    if lo == -math.inf:
        return -math.inf
    return 0.5 * (lo + hi)


def hyperparameter_search(system: DynamicalSystem, policy: Policy, config: EstimatorConfig,
                          grids: Mapping[str, Sequence[float]], seeds: Sequence[int], steps: int,
                          eval_seed: int = 0, eval_every: Optional[int] = None,
                          budget: Optional[int] = None, eval_batch: int = DEFAULT_EVAL_BATCH) -> SearchResult:
    """Grid search scored by the median final J over training seeds.

    ``grids`` maps ``lr`` (required), ``lambda`` and ``sigma_xi`` to candidate
    values. Diverged runs score -inf. Ties go to the smaller learning rate.
    ``budget`` caps the total number of training rollouts; once it is spent
    the remaining runs are skipped and the result is flagged.
    """
    if "lr" not in grids or not grids["lr"]:
        raise InvalidArgumentError("grids must contain a non-empty 'lr' list")
    unknown = set(grids) - set(_GRID_KEYS)
    if unknown:
        raise InvalidArgumentError(f"unknown grid keys {sorted(unknown)}")
    if any(len(v) == 0 for v in grids.values()):
        raise InvalidArgumentError("every grid must be non-empty")
    if not seeds:
        raise InvalidArgumentError("need at least one seed")
    keys = sorted(grids)
    eval_every = eval_every or steps
    table, scores = [], []
    spent = 0
    exhausted = False
    for combo in itertools.product(*(grids[k] for k in keys)):
        params = dict(zip(keys, (float(v) for v in combo)))
        cfg = config
        for k, attr in _GRID_KEYS.items():
            if attr is not None and k in params:
                cfg = replace(cfg, **{attr: params[k]})
        finals = []
        for seed in seeds:
            if budget is not None and spent >= budget:
                exhausted = True
                break
            remaining = None if budget is None else budget - spent
            curve = sgd_train(system, policy, cfg, steps, params["lr"], eval_every, eval_seed, int(seed),
                              eval_batch, rollout_budget=remaining)
            spent += curve.rollouts if not curve.diverged else _rollouts_spent(curve, cfg, policy, system)
            finals.append(curve.final_J)
            table.append({**params, "seed": int(seed), "initial_J": curve.initial_J, "final_J": curve.final_J,
                          "converged": curve.converged, "diverged": curve.diverged})
        if finals:
            scores.append({**params, "score": _median(finals), "runs": len(finals),
                           "discarded": sum(1 for r in table[-len(finals):] if not r["converged"])})
        if exhausted:
            break
    best = max(scores, key=lambda r: (r["score"], -r["lr"]))
    params = {k: best[k] for k in keys}
    return SearchResult(params, best["score"], scores, table, exhausted)


def _rollouts_spent(curve: LearningCurve, cfg: EstimatorConfig, policy: Policy, system: DynamicalSystem) -> int:
    per = resolved(system, cfg).rollouts_per_sample(policy.d_Theta)
    return curve.steps * per
