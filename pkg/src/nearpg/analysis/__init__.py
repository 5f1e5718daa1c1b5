"""Measurement harness: ground truths, sweeps, bounds and training."""
from .bounds import BoundsReport, LipschitzProfile, theoretical_bounds
from .sweeps import (
    GroundTruth,
    LogLogFit,
    SweepReport,
    empirical_sample_complexity,
    fit_loglog,
    gaussian_sample_complexity,
    geometric_grid,
    ground_truth_gradient,
    variance_sweep,
    wilson_interval,
)
from .training import LearningCurve, SearchResult, evaluate_J, hyperparameter_search, sgd_train, warm_start

__all__ = [
    "BoundsReport", "LipschitzProfile", "theoretical_bounds",
    "GroundTruth", "LogLogFit", "SweepReport", "empirical_sample_complexity", "fit_loglog",
    "gaussian_sample_complexity", "geometric_grid", "ground_truth_gradient", "variance_sweep", "wilson_interval",
    "LearningCurve", "SearchResult", "evaluate_J", "hyperparameter_search", "sgd_train", "warm_start",
]
