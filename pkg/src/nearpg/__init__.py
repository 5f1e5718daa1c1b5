"""Policy-gradient estimators for nearly deterministic dynamical systems."""
__version__ = "0.1.0"

from .dynamics import (
    DynamicalSystem,
    FunctionalSystem,
    NoiseSequence,
    Rollout,
    linear_testbed,
    pendulum_system,
    rollout,
    sample_noise,
    step,
)
from .errors import InvalidArgumentError, UnsupportedOperationError
from .estimators import EstimatorConfig, GradientEstimate, estimate, estimate_fd, estimate_mb, estimate_pg, mb_single
from .policy import Policy, constant, init_mlp, linear_gain

__all__ = [
    "DynamicalSystem", "FunctionalSystem", "NoiseSequence", "Rollout", "linear_testbed", "pendulum_system",
    "rollout", "sample_noise", "step", "InvalidArgumentError", "UnsupportedOperationError", "EstimatorConfig",
    "GradientEstimate", "estimate", "estimate_fd", "estimate_mb", "estimate_pg", "mb_single", "Policy",
    "constant", "init_mlp", "linear_gain",
]
