"""Flat ``key = value`` run configurations.

Keys are dotted (``system.name``, ``estimator.lambda``); ``#`` starts a
comment. Values stay strings until a typed accessor reads them, and the
effective configuration is written back in the same format with sorted keys.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import InvalidArgumentError

DEFAULTS = {
    "seed": "0",
    "policy.family": "mlp",
    "policy.hidden": "8",
    "policy.init_seed": "0",
    "policy.warm_start": "false",
    "estimator.kind": "MB",
    "estimator.baseline": "none",
    "estimator.m_b": "16",
    "estimator.lambda": "1e-3",
    "estimator.mode": "basis",
    "estimator.crn": "false",
    "experiment.n": "1",
    "experiment.repeats": "200",
    "experiment.truth": "analytic",
    "experiment.truth_n": "100000",
    "experiment.estimators": "MB,FD,PG",
    "experiment.epsilon": "0.2",
    "experiment.delta": "0.1",
    "experiment.grid_ratio": "1.5",
    "experiment.n_max": "100",
    "experiment.steps": "100",
    "experiment.lr": "1e-6",
    "experiment.eval_every": "10",
    "experiment.eval_seed": "1000",
    "experiment.eval_batch": "64",
    "experiment.train_seed": "1",
    "experiment.seeds": "1,2,3",
    "verify.n": "1000000",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidArgumentError(f"config line {lineno}: empty key")
        out[key] = value
    return out


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


def format_config(values: Mapping[str, str]) -> str:
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


class Config:
    """Typed read access to a flat key/value mapping with defaults."""

    def __init__(self, values: Optional[Mapping[str, str]] = None, defaults: Mapping[str, str] = DEFAULTS):
        self.values = dict(defaults)
        self.values.update(values or {})

    def __contains__(self, key: str) -> bool:
        return key in self.values and self.values[key] != ""

    def set(self, key: str, value) -> None:
        self.values[key] = str(value)

    def raw(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.values.get(key, default)

    def _need(self, key: str) -> str:
        if key not in self:
            raise InvalidArgumentError(f"missing config key {key!r}")
        return self.values[key]

    def str(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.values[key] if key in self else default

    def float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        if key not in self:
            if default is None:
                self._need(key)
            return default
        try:
            return float(self.values[key])
        except ValueError:
            raise InvalidArgumentError(f"{key} must be a number, got {self.values[key]!r}") from None

    def int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        if key not in self:
            if default is None:
                self._need(key)
            return default
        text = self.values[key]
        try:
            value = float(text)
        except ValueError:
            raise InvalidArgumentError(f"{key} must be an integer, got {text!r}") from None
        if value != int(value):
            raise InvalidArgumentError(f"{key} must be an integer, got {text!r}")
        return int(value)

    def bool(self, key: str, default: bool = False) -> bool:
        if key not in self:
            return default
        text = self.values[key].lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise InvalidArgumentError(f"{key} must be a boolean, got {self.values[key]!r}")

    def floats(self, key: str) -> list:
        return [float(x) for x in self._need(key).split(",") if x.strip()]

    def ints(self, key: str) -> list:
        return [int(float(x)) for x in self._need(key).split(",") if x.strip()]

    def strs(self, key: str) -> list:
        return [x.strip() for x in self._need(key).split(",") if x.strip()]

    def effective(self, keys: Iterable[str]) -> dict:
        """The subset of settings named by ``keys`` that are present."""
        return {k: self.values[k] for k in keys if k in self}

    def text(self) -> str:
        return format_config({k: v for k, v in self.values.items() if v != ""})
