"""Scheduling with one bit of advice: analytic M/G/1 results, simulators and a mean-field model."""

from .analytic import (
    InstabilityError,
    PolicyConfig,
    SojournBreakdown,
    evaluate,
    fifo_sojourn,
    optimal_threshold,
    threshold_exact,
    threshold_predicted,
)
from .dist import DomainError, Exponential, ExponentialPrediction, Perfect, Weibull

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "Exponential",
    "ExponentialPrediction",
    "InstabilityError",
    "Perfect",
    "PolicyConfig",
    "SojournBreakdown",
    "Weibull",
    "evaluate",
    "fifo_sojourn",
    "optimal_threshold",
    "threshold_exact",
    "threshold_predicted",
]
