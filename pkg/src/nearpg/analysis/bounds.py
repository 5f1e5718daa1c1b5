"""Closed-form sample-complexity bounds with explicit constants.

The formulas keep every constant that appears in the derivations. Where a
derivation only fixes a rate, the hidden constant is set to 1 and the output
says so. The numbers are meant for comparing how the bounds move with the
problem parameters, not as tight predictions.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import InvalidArgumentError


@dataclass(frozen=True)
class LipschitzProfile:
    """Lipschitz constants of the rewards, dynamics and policy.

    ``grad_*`` fields are the Lipschitz constants of the corresponding
    gradients. ``*_theta`` refers to the closed-loop maps ``s -> R(s, pi(s))``
    and ``s -> f(s, pi(s))``; ``*tilde*`` to their noisy-action counterparts.
    """
    L_R: float = 1.0
    L_f: float = 1.0
    L_pi: float = 1.0
    L_R_theta: float = 1.0
    L_f_theta: float = 1.0
    L_Rtilde_theta: float = 1.0
    L_ftilde_theta: float = 1.0
    grad_L_R: float = 1.0
    grad_L_f: float = 1.0
    grad_L_pi: float = 1.0
    grad_L_R_theta: float = 1.0
    grad_L_f_theta: float = 1.0
    grad_L_Rtilde_theta: float = 1.0
    grad_L_ftilde_theta: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidArgumentError(f"{f.name} must be a finite non-negative number, got {v}")

    def bar(self, name: str) -> float:
        """``max(L_grad_h, L_h, 1)`` for the map named ``name`` (for example ``"f_theta"``)."""
        return max(getattr(self, f"grad_L_{name}"), getattr(self, f"L_{name}"), 1.0)

    @classmethod
    def ones(cls) -> "LipschitzProfile":
        return cls()


@dataclass(frozen=True)
class BoundsReport:
    sqrt_n_mb: float
    sqrt_n_pg: float
    sqrt_n_fd: float
    sigma_mb: float
    tau_pg: float
    sigma_fd: float
    fd_lambda: float
    L_V: list
    L_gradV: list
    L_Vtilde: list
    label: str = "proof-constant bounds (rate constants set to 1 where unspecified)"

    @property
    def vacuous(self) -> dict:
        return {k: not math.isfinite(getattr(self, k)) for k in ("sqrt_n_mb", "sqrt_n_pg", "sqrt_n_fd")}

    def n(self, which: str) -> float:
        """Sample count implied by a ``sqrt_n_*`` entry (``inf`` when vacuous)."""
        r = getattr(self, f"sqrt_n_{which}")
        return math.ceil(r * r) if math.isfinite(r * r) else math.inf

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vacuous"] = self.vacuous
        d["status"] = {k: ("bound vacuous" if v else "finite") for k, v in self.vacuous.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_finite_or_str)

    def rows(self) -> list:
        """(quantity, value) pairs for tabular output."""
        out = []
        for k in ("sigma_mb", "sqrt_n_mb", "tau_pg", "sqrt_n_pg", "fd_lambda", "sigma_fd", "sqrt_n_fd"):
            v = getattr(self, k)
            out.append((k, v if math.isfinite(v) else "bound vacuous"))
        for name in ("L_V", "L_gradV", "L_Vtilde"):
            for t, v in enumerate(getattr(self, name)):
                out.append((f"{name}[{t}]", v if math.isfinite(v) else "bound vacuous"))
        return out


def _finite_or_str(x):
    return str(x)


def _f(x) -> float:
    v = float(x)
    return v if not math.isnan(v) else math.inf


def value_lipschitz(profile: LipschitzProfile, T: int) -> list:
    """Lipschitz constants of the value functions, one per step."""
    with np.errstate(over="ignore", invalid="ignore"):
        b = np.float64(profile.bar("f_theta"))
        return [_f(3.0 * T ** 2 * profile.L_R_theta * b ** (T - t - 1)) for t in range(T)]


def value_gradient_lipschitz(profile: LipschitzProfile, T: int) -> list:
    with np.errstate(over="ignore", invalid="ignore"):
        b = np.float64(profile.bar("f_theta"))
        return [_f(44.0 * T ** 5 * profile.bar("R_theta") * b ** (4 * (T - t - 1))) for t in range(T)]


def noisy_value_lipschitz(profile: LipschitzProfile, T: int) -> list:
    with np.errstate(over="ignore", invalid="ignore"):
        b = np.float64(profile.bar("ftilde_theta"))
        return [_f(3.0 * T ** 2 * profile.L_Rtilde_theta * b ** (T - t - 1)) for t in range(T)]


def theoretical_bounds(profile: LipschitzProfile, T: int, d_S: int, d_A: int, d_Theta: int, sigma_zeta: float,
                       epsilon: float, delta: float) -> BoundsReport:
    """Predicted ``sqrt(n)`` for the three estimators and the matching FD step size."""
    if T < 1 or d_S < 1 or d_A < 1 or d_Theta < 1:
        raise InvalidArgumentError("T and all dimensions must be positive")
    if not sigma_zeta >= 0:
        raise InvalidArgumentError("sigma_zeta must be non-negative")
    if not (0 < epsilon <= 1 and 0 < delta <= 1):
        raise InvalidArgumentError("epsilon and delta must lie in (0, 1]")
    p = profile
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        T_ = np.float64(T)
        sig = np.float64(sigma_zeta)
        bR = np.float64(p.bar("R_theta"))
        bf = np.float64(p.bar("f_theta"))

        # pathwise estimator
        A_mb = 132.0 * T_ ** 7 * bR * bf ** (5 * T)
        TdS = T_ * d_S
        sigma_mb = max(10.0 * A_mb * sig * TdS * np.log(TdS), 5.0 * A_mb * sig * math.sqrt(d_S))
        sqrt_n_mb = sigma_mb * math.sqrt(2.0 * math.log(2.0 * d_S / delta)) / epsilon

        # score-function estimator with an exact baseline; sigma_xi = sigma_zeta cancels
        d = max(d_S, d_A)
        A_times_tb = (3.0 * T_ ** 4 * (p.L_R + p.L_Rtilde_theta) * max(p.L_f, p.grad_L_f, 1.0) * p.L_pi
                      * np.float64(p.bar("ftilde_theta")) ** T * d * 2.0 * d)
        D = T_ ** 2 * (d_A + d_S + 1) * d_A
        tau_pg = A_times_tb * D * np.log(D)
        sqrt_n_pg = tau_pg * math.sqrt(2.0 * math.log(2.0 * T * d_A / delta)) / epsilon

        # finite differences
        lam = epsilon / (88.0 * T_ ** 5 * bR * bf ** (4 * T) * d_A)
        eps_t = epsilon / (2.0 * math.sqrt(d_Theta))
        delta_t = delta / d_Theta
        A_fd = 3.0 * T_ ** 3 * p.L_R_theta * bf ** T / lam
        Dp = 2.0 * T_ * d_A
        sigma_fd = max(10.0 * A_fd * sig * Dp * np.log(Dp), 5.0 * A_fd * sig * math.sqrt(d_A))
        sqrt_n_fd = sigma_fd * math.sqrt(2.0 * math.log(2.0 * d_A / delta_t)) / eps_t

    return BoundsReport(
        sqrt_n_mb=_f(sqrt_n_mb), sqrt_n_pg=_f(sqrt_n_pg), sqrt_n_fd=_f(sqrt_n_fd),
        sigma_mb=_f(sigma_mb), tau_pg=_f(tau_pg), sigma_fd=_f(sigma_fd), fd_lambda=float(lam),
        L_V=value_lipschitz(p, T), L_gradV=value_gradient_lipschitz(p, T), L_Vtilde=noisy_value_lipschitz(p, T),
    )
