"""Command-line entry point: ``nearpg <command> [--config PATH] [--seed S] [--workers N] [--out DIR]``.

Every run writes its effective configuration to ``config.txt`` and a
``manifest.json`` listing seeds and output files next to its results.
Re-running with ``--config DIR/config.txt`` reproduces the outputs byte for
byte, whatever the worker count.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as _rng
from . import verify as _verify
from .analysis import (
    LipschitzProfile,
    empirical_sample_complexity,
    geometric_grid,
    ground_truth_gradient,
    hyperparameter_search,
    sgd_train,
    theoretical_bounds,
    variance_sweep,
    warm_start,
)
from .config import Config, load_config
from .dynamics import linear_testbed, pendulum_system, rollout, sample_noise
from .errors import InvalidArgumentError, UnsupportedOperationError
from .estimators import EstimatorConfig, estimate
from .policy import Policy, init_mlp, load_policy, save_policy

COMMANDS = ("rollout", "estimate", "sweep", "complexity", "train", "search", "bounds", "verify")
NEEDS_SYSTEM = {"rollout", "estimate", "sweep", "complexity", "train", "search"}
TESTBEDS = {"mb_testbed": "MB", "pg_testbed": "PG", "fd_testbed": "FD"}


# --------------------------------------------------------------------------
# Building objects from a config


def build_system(cfg: Config, sigma=None):
    name = cfg.str("system.name")
    if name == "pendulum":
        s = cfg.float("system.sigma_zeta", 0.0) if sigma is None else sigma
        return pendulum_system(s)
    if name in TESTBEDS:
        s = cfg.float("system.sigma", 0.0) if sigma is None else sigma
        return linear_testbed(TESTBEDS[name], cfg.float("system.beta", 1.5), s, cfg.int("system.T", 5))
    raise InvalidArgumentError(f"unknown system {name!r}; expected pendulum, mb_testbed, pg_testbed or fd_testbed")


def build_policy(cfg: Config, system) -> Policy:
    if "policy.checkpoint" in cfg:
        return load_policy(cfg.str("policy.checkpoint"))
    if hasattr(system, "policy"):
        theta = cfg.float("policy.theta", 0.0)
        return system.policy(theta)
    family = cfg.str("policy.family")
    if family == "mlp":
        policy = init_mlp(system.d_S, system.d_A, cfg.int("policy.hidden"), cfg.int("policy.init_seed"))
    elif "policy.theta" in cfg:
        theta = cfg.floats("policy.theta")
        policy = Policy(family, system.d_S, system.d_A, np.array(theta))
    else:
        policy = Policy(family, system.d_S, system.d_A, np.zeros(system.d_A * (system.d_S if family == "linear_gain"
                                                                                else 1)))
    if cfg.bool("policy.warm_start"):
        policy, _ = warm_start(system, policy, eval_seed=cfg.int("experiment.eval_seed"),
                               train_seed=cfg.int("policy.init_seed"))
    return policy


def build_estimator(cfg: Config, kind=None) -> EstimatorConfig:
    return EstimatorConfig(
        kind=kind or cfg.str("estimator.kind"),
        sigma_xi=cfg.float("estimator.sigma_xi", None) if "estimator.sigma_xi" in cfg else None,
        baseline=cfg.str("estimator.baseline"),
        m_b=cfg.int("estimator.m_b"),
        lam=cfg.float("estimator.lambda"),
        mode=cfg.str("estimator.mode"),
        crn=cfg.bool("estimator.crn"),
    )


# --------------------------------------------------------------------------
# Commands


def cmd_rollout(cfg, out: Path, workers: int) -> dict:
    system = build_system(cfg)
    policy = build_policy(cfg, system)
    noise = sample_noise(system, _rng.derive_seed(cfg.int("seed"), _rng.NOISE))
    r = rollout(system, policy, noise)
    _write(out / "rollout.csv", r.to_csv())
    _write_json(out / "summary.json", {"J_hat": r.J_hat, "T": system.T, "system": system.params()})
    print(f"J_hat = {r.J_hat!r}")
    return {"files": ["rollout.csv", "summary.json"]}


def cmd_estimate(cfg, out: Path, workers: int) -> dict:
    system = build_system(cfg)
    policy = build_policy(cfg, system)
    est = estimate(system, policy, build_estimator(cfg), cfg.int("experiment.n"), cfg.int("seed"), workers)
    _write(out / "estimate.json", est.to_json() + "\n")
    print(est.to_json())
    return {"files": ["estimate.json"]}


def cmd_sweep(cfg, out: Path, workers: int) -> dict:
    system0 = build_system(cfg)
    policy = build_policy(cfg, system0)
    configs = {k.upper(): build_estimator(cfg, k) for k in cfg.strs("experiment.estimators")}
    reports = variance_sweep(configs, lambda s: build_system(cfg, s), cfg.floats("experiment.sigmas"), policy,
                             cfg.int("experiment.repeats"), cfg.int("seed"), cfg.str("experiment.truth"),
                             cfg.int("experiment.truth_n"), workers)
    files = []
    for label, rep in reports.items():
        _write(out / f"sweep_{label}.csv", rep.to_csv())
        files.append(f"sweep_{label}.csv")
        slope = "n/a" if rep.fit is None else f"{rep.fit.slope:.4f}"
        print(f"{label}: log-log slope of error std = {slope}")
    _write_json(out / "sweep.json", {k: r.to_dict() for k, r in reports.items()})
    return {"files": files + ["sweep.json"]}


def cmd_complexity(cfg, out: Path, workers: int) -> dict:
    system = build_system(cfg)
    policy = build_policy(cfg, system)
    if "experiment.n_grid" in cfg:
        grid = cfg.ints("experiment.n_grid")
    else:
        grid = geometric_grid(cfg.float("experiment.grid_ratio"), cfg.int("experiment.n_max"))
    truth = ground_truth_gradient(system, policy, cfg.str("experiment.truth"), seed=cfg.int("seed"),
                                  N=cfg.int("experiment.truth_n"), workers=workers).grad
    rep = empirical_sample_complexity(build_estimator(cfg), system, policy, cfg.float("experiment.epsilon"),
                                      cfg.float("experiment.delta"), grid, cfg.int("experiment.repeats"),
                                      cfg.int("seed"), truth, workers)
    _write(out / "complexity.csv", rep.to_csv())
    _write(out / "complexity.json", rep.to_json() + "\n")
    print(f"threshold n = {rep.threshold if rep.threshold_reached else 'not reached'}")
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return {"files": ["complexity.csv", "complexity.json"]}


def cmd_train(cfg, out: Path, workers: int) -> dict:
    system = build_system(cfg)
    policy = build_policy(cfg, system)
    curve = sgd_train(system, policy, build_estimator(cfg), cfg.int("experiment.steps"), cfg.float("experiment.lr"),
                      cfg.int("experiment.eval_every"), cfg.int("experiment.eval_seed"),
                      cfg.int("experiment.train_seed"), cfg.int("experiment.eval_batch"))
    _write(out / "curve.csv", curve.to_csv())
    _write(out / "curve.json", curve.to_json() + "\n")
    save_policy(policy.with_theta(curve.final_theta), out / "policy.txt")
    print(f"initial J = {curve.initial_J!r}, final J = {curve.final_J!r}, converged = {curve.converged}")
    return {"files": ["curve.csv", "curve.json", "policy.txt"]}


def cmd_search(cfg, out: Path, workers: int) -> dict:
    system = build_system(cfg)
    policy = build_policy(cfg, system)
    grids = {"lr": cfg.floats("experiment.search.lr")}
    for key in ("lambda", "sigma_xi"):
        if f"experiment.search.{key}" in cfg:
            grids[key] = cfg.floats(f"experiment.search.{key}")
    budget = cfg.int("experiment.budget") if "experiment.budget" in cfg else None
    res = hyperparameter_search(system, policy, build_estimator(cfg), grids, cfg.ints("experiment.seeds"),
                                cfg.int("experiment.steps"), cfg.int("experiment.eval_seed"), budget=budget,
                                eval_batch=cfg.int("experiment.eval_batch"))
    _write(out / "search.json", res.to_json() + "\n")
    print(f"best = {res.best}, score = {res.best_score!r}" + (" (budget exhausted)" if res.budget_exhausted else ""))
    return {"files": ["search.json"]}


def cmd_bounds(cfg, out: Path, workers: int) -> dict:
    fields = LipschitzProfile.__dataclass_fields__
    profile = LipschitzProfile(**{k: cfg.float(f"bounds.{k}") for k in fields if f"bounds.{k}" in cfg})
    rep = theoretical_bounds(profile, cfg.int("bounds.T", 3), cfg.int("bounds.d_S", 1), cfg.int("bounds.d_A", 1),
                             cfg.int("bounds.d_Theta", 1), cfg.float("bounds.sigma_zeta", 0.01),
                             cfg.float("bounds.epsilon", 0.1), cfg.float("bounds.delta", 0.1))
    lines = ["quantity,value"] + [f"{k},{v if isinstance(v, str) else format(v, '.17g')}" for k, v in rep.rows()]
    _write(out / "bounds.csv", "\n".join(lines) + "\n")
    _write(out / "bounds.json", rep.to_json() + "\n")
    print(rep.label)
    for k, v in rep.rows():
        print(f"  {k:<14} {v if isinstance(v, str) else format(v, '.6g')}")
    return {"files": ["bounds.csv", "bounds.json"]}


def cmd_verify(cfg, out: Path, workers: int) -> dict:
    results = _verify.run_all(cfg.int("seed"), cfg.int("verify.n"))
    _write(out / "checks.jsonl", "".join(r.to_json() + "\n" for r in results))
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}")
    return {"files": ["checks.jsonl"], "passed": all(r.passed for r in results)}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# --------------------------------------------------------------------------
# Plumbing


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nearpg", description="Policy-gradient estimation laboratory.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides the config)")
    common.add_argument("--workers", type=int, default=1, metavar="N", help="worker threads (does not change output)")
    common.add_argument("--out", metavar="DIR", default="nearpg-out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key; may be repeated")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    helps = {
        "rollout": "simulate one rollout and write it as CSV",
        "estimate": "run one gradient estimator",
        "sweep": "error statistics across noise scales",
        "complexity": "empirical sample complexity on a grid of n",
        "train": "stochastic gradient ascent",
        "search": "learning-rate grid search",
        "bounds": "evaluate the closed-form sample-complexity bounds",
        "verify": "run the numerical check suite",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        values = load_config(args.config) if args.config else {}
        for item in args.set:
            if "=" not in item:
                parser.error(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            values[k.strip()] = v.strip()
    except (OSError, InvalidArgumentError) as exc:
        parser.error(str(exc))
    cfg = Config(values)
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if args.command in NEEDS_SYSTEM and "system.name" not in cfg:
        parser.error("missing system name (set system.name in the config or pass --set system.name=...)")
    if args.workers < 1:
        parser.error("--workers must be at least 1")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[args.command](cfg, out, args.workers)
    except (InvalidArgumentError, UnsupportedOperationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write(out / "config.txt", cfg.text())
    manifest = {
        "command": args.command,
        "package": "nearpg",
        "version": __version__,
        "seed": cfg.int("seed"),
        "outputs": ["config.txt"] + result["files"],
    }
    _write_json(out / "manifest.json", manifest)
    return 0 if result.get("passed", True) else 1


if __name__ == "__main__":
    sys.exit(main())
