"""Mean waiting and sojourn times for one-bit threshold scheduling in M/G/1.

Jobs labeled below the threshold T take priority over the rest, which are
served FIFO. Labels are either exact (size <= T) or drawn from a
:class:`~onebit.dist.PredictionModel`. Every calculator works for any
unit-mean :class:`~onebit.dist.ServiceDistribution`; for the exponential
service / exponential prediction pairing the class fraction and class load
also have closed forms in modified Bessel functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import bessel
from .dist import (
    DomainError,
    Exponential,
    ExponentialPrediction,
    Perfect,
    PredictionModel,
    ServiceDistribution,
    partial_load,
    residual_work,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
BELOW_ORDERS = ("front", "fifo")


class InstabilityError(ArithmeticError):
    """The configuration has no stationary regime (some load >= 1)."""


class SearchError(ArithmeticError):
    """Optimal-threshold search could not bracket or confirm a minimum."""


@dataclass(frozen=True)
class SojournBreakdown:
    w_below: float
    w_above: float
    s_below: float
    s_above: float
    w_total: float
    s_total: float
    class_fraction_below: float


@dataclass(frozen=True)
class PolicyConfig:
    """One threshold policy on one M/G/1 queue.

    ``model=None`` means exact advice. ``below_order`` fixes where an
    arriving below-labeled job goes inside its class: ``"front"`` puts it
    ahead of every queued job and, when preemptive, also preempts the job in
    service; ``"fifo"`` queues it behind earlier below-labeled jobs, which it
    never preempts. Mean sojourn only depends on the choice when preemptive.
    """

    dist: ServiceDistribution
    lam: float
    T: float
    preemptive: bool = False
    model: PredictionModel | None = None
    below_order: str = "front"

    def __post_init__(self):
        if self.below_order not in BELOW_ORDERS:
            raise DomainError(f"below_order must be one of {BELOW_ORDERS}, got {self.below_order!r}")
        if not 0.0 <= self.lam < 1.0:
            raise DomainError(f"arrival rate must lie in [0, 1), got {self.lam}")
        if not self.T >= 0:
            raise DomainError(f"threshold must be nonnegative, got {self.T}")

    def with_threshold(self, T: float) -> "PolicyConfig":
        return replace(self, T=T)


@dataclass(frozen=True)
class ConservationCheck:
    expected_load: float
    residual: float
    total_rate: float


def conservation_check(dist: ServiceDistribution, lam: float) -> ConservationCheck:
    """Stationary unfinished work of any non-idling M/G/1 discipline."""
    V = residual_work(dist, lam)
    rho = lam * dist.mean
    if rho >= 1.0:
        raise InstabilityError(f"total load {rho} >= 1")
    return ConservationCheck(expected_load=V / (1.0 - rho), residual=V, total_rate=rho)


def fifo_sojourn(dist: ServiceDistribution, lam: float) -> float:
    """Pollaczek-Khinchine mean sojourn time."""
    if lam >= 1.0:
        raise InstabilityError(f"arrival rate {lam} >= 1")
    V = residual_work(dist, lam)
    rho = lam * dist.mean
    if rho >= 1.0:
        raise InstabilityError(f"total load {rho} >= 1")
    return dist.mean + V / (1.0 - rho)


# --- class fraction and class load under predictions ------------------------


def q_fraction_bessel(T: float) -> float:
    """Fraction labeled below T, exponential service with exponential predictions."""
    if T <= 0:
        return 0.0
    if math.isinf(T):
        return 1.0
    r = 2.0 * math.sqrt(T)
    return 1.0 - r * bessel.k1(r)


def rho_prime_bessel(lam: float, T: float) -> float:
    """Load of the below class, exponential service with exponential predictions."""
    if T <= 0:
        return 0.0
    if math.isinf(T):
        return lam
    r = 2.0 * math.sqrt(T)
    return lam * (1.0 - 2.0 * T * bessel.k2(r))


def _g_scalar(model: PredictionModel, T: float) -> Callable[[float], float]:
    if isinstance(model, ExponentialPrediction):
        def g(x):
            return 1.0 if x <= 0.0 else -math.expm1(-T / x)
        return g
    return lambda x: float(model.g(T, x))


def _closed_form_available(model, dist) -> bool:
    return isinstance(model, ExponentialPrediction) and type(dist) is Exponential


# below this threshold the Bessel forms lose digits to cancellation
BESSEL_MIN_T = 0.05


def _use_bessel(method, model, dist, T) -> bool:
    if method == "bessel":
        if not _closed_form_available(model, dist):
            raise DomainError("Bessel closed form needs exponential service and exponential predictions")
        return True
    return method == "auto" and T >= BESSEL_MIN_T and _closed_form_available(model, dist)


def q_fraction(model: PredictionModel, dist: ServiceDistribution, T: float, method: str = "quad") -> float:
    """Probability that a job is labeled below T.

    ``method`` is ``"quad"`` (integrate the defining expectation),
    ``"bessel"`` (closed form, exponential pairing only) or ``"auto"``.
    """
    if T < 0:
        raise DomainError(f"threshold must be nonnegative, got {T}")
    if isinstance(model, Perfect):
        return float(dist.cdf(T)) if math.isfinite(T) else 1.0
    if T == 0:
        return 0.0
    if math.isinf(T):
        return 1.0
    if _use_bessel(method, model, dist, T):
        return q_fraction_bessel(T)
    return dist.expect(_g_scalar(model, T))


def rho_prime(model: PredictionModel, dist: ServiceDistribution, lam: float, T: float, method: str = "quad") -> float:
    """Rate at which work arrives from jobs labeled below T."""
    if not 0.0 <= lam < 1.0:
        raise DomainError(f"arrival rate must lie in [0, 1), got {lam}")
    if T < 0:
        raise DomainError(f"threshold must be nonnegative, got {T}")
    if isinstance(model, Perfect):
        return partial_load(dist, lam, T)
    if T == 0:
        return 0.0
    if math.isinf(T):
        return lam * dist.mean
    if _use_bessel(method, model, dist, T):
        return rho_prime_bessel(lam, T)
    g = _g_scalar(model, T)
    return lam * dist.expect(lambda x: x * g(x))


# --- the four one-bit policies ----------------------------------------------


def _breakdown(V, rho, frac_below, work_below, lam, mean, preemptive, residual_below=None) -> SojournBreakdown:
    """Assemble class means; ``work_below`` is E[X; labeled below]."""
    load_below = lam * work_below
    if rho >= 1.0 or load_below >= 1.0:
        raise InstabilityError(f"load {max(rho, load_below)} >= 1")
    # an empty class gets conditional size 0 and weight 0
    m_below = work_below / frac_below if frac_below > 0 else 0.0
    m_above = (mean - work_below) / (1.0 - frac_below) if frac_below < 1 else 0.0

    w_above = V / ((1.0 - rho) * (1.0 - load_below))
    if preemptive and residual_below is not None:
        # below class alone is an M/G/1 FIFO queue
        w_below = residual_below / (1.0 - load_below)
        s_below = w_below + m_below
        s_above = w_above + m_above / (1.0 - load_below)
    elif preemptive:
        w_below = 0.0
        s_below = m_below / (1.0 - load_below)
        s_above = w_above + m_above / (1.0 - load_below)
    else:
        w_below = V / (1.0 - load_below)
        s_below = w_below + m_below
        s_above = w_above + m_above
    w_total = frac_below * w_below + (1.0 - frac_below) * w_above
    s_total = frac_below * s_below + (1.0 - frac_below) * s_above
    return SojournBreakdown(w_below, w_above, s_below, s_above, w_total, s_total, frac_below)


def threshold_exact(config: PolicyConfig) -> SojournBreakdown:
    """Threshold policy with exact advice (label = size <= T)."""
    if config.model is not None and not isinstance(config.model, Perfect):
        raise DomainError("threshold_exact takes exact advice; use threshold_predicted")
    dist, lam, T = config.dist, config.lam, config.T
    if lam >= 1.0:
        raise InstabilityError(f"arrival rate {lam} >= 1")
    V = residual_work(dist, lam)
    frac = float(dist.cdf(T)) if math.isfinite(T) else 1.0
    work_below = dist.partial_load_integral(T)
    residual_below = None
    if config.preemptive and config.below_order == "fifo":
        residual_below = 0.5 * lam * dist.expect(lambda x: x * x, upper=T) if T > 0 else 0.0
    return _breakdown(V, lam * dist.mean, frac, work_below, lam, dist.mean, config.preemptive, residual_below)


def threshold_predicted(config: PolicyConfig, method: str = "auto") -> SojournBreakdown:
    """Threshold policy where the label comes from a prediction model.

    Identical to :func:`threshold_exact` with the cdf at T replaced by the
    labeled-below fraction and the partial load by the labeled-below load.
    """
    model = config.model if config.model is not None else Perfect()
    dist, lam, T = config.dist, config.lam, config.T
    if lam >= 1.0:
        raise InstabilityError(f"arrival rate {lam} >= 1")
    if isinstance(model, Perfect):
        return threshold_exact(replace(config, model=None))
    V = residual_work(dist, lam)
    frac = q_fraction(model, dist, T, method=method)
    if lam > 0:
        work_below = rho_prime(model, dist, lam, T, method=method) / lam
    else:
        work_below = rho_prime(model, dist, 0.5, T, method=method) / 0.5
    residual_below = None
    if config.preemptive and config.below_order == "fifo" and T > 0:
        g = _g_scalar(model, T)
        residual_below = 0.5 * lam * dist.expect(lambda x: x * x * g(x))
    elif config.preemptive and config.below_order == "fifo":
        residual_below = 0.0
    return _breakdown(V, lam * dist.mean, frac, work_below, lam, dist.mean, config.preemptive, residual_below)


def evaluate(config: PolicyConfig) -> SojournBreakdown:
    if config.model is None:
        return threshold_exact(config)
    return threshold_predicted(config)


# --- exponential closed forms, used as independent checks -------------------


def s_exp_nonpreempt(lam: float, T: float) -> float:
    e = math.exp(-T)
    return lam * (1.0 - lam + lam * e) / ((1.0 - lam) * (1.0 - lam * (1.0 - (T + 1.0) * e))) + 1.0


def s_exp_preempt(lam: float, T: float) -> float:
    e = math.exp(-T)
    return (1.0 - lam + lam * e) / ((1.0 - lam) * (1.0 - lam * (1.0 - (T + 1.0) * e)))


def s_weibull_nonpreempt(lam: float, T: float) -> float:
    r = math.sqrt(2.0 * T)
    e = math.exp(-r)
    return 3.0 * lam * (1.0 - lam + lam * e) / ((1.0 - lam) * (1.0 - lam * (1.0 - e * (T + r + 1.0)))) + 1.0


def s_weibull_preempt(lam: float, T: float) -> float:
    r = math.sqrt(2.0 * T)
    e = math.exp(-r)
    return (1.0 - lam + 3.0 * lam * e) / ((1.0 - lam) * (1.0 - lam * (1.0 - e * (T + r + 1.0))))


def s_exp_pred_nonpreempt(lam: float, T: float) -> float:
    r = 2.0 * math.sqrt(T)
    q = 1.0 - r * bessel.k1(r)
    return lam * (1.0 - lam * q) / ((1.0 - lam) * (1.0 - lam * (1.0 - 2.0 * T * bessel.k2(r)))) + 1.0


def s_exp_pred_preempt(lam: float, T: float) -> float:
    r = 2.0 * math.sqrt(T)
    return (lam * r * bessel.k1(r) + 1.0 - lam) / ((1.0 - lam) * (1.0 - lam * (1.0 - 2.0 * T * bessel.k2(r))))


# --- optimal threshold -------------------------------------------------------


@dataclass(frozen=True)
class OptimalThreshold:
    T: float
    value: float


def _golden_section(f, a, b, xtol=1e-10, maxiter=500):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= xtol * max(1.0, abs(c)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def optimal_threshold(
    config: PolicyConfig,
    metric: str = "s_total",
    t_min: float = 1e-4,
    t_max: float = 8.0,
    grid_points: int = 64,
    max_expansions: int = 12,
) -> OptimalThreshold:
    """Minimise the chosen breakdown field over the threshold.

    A log-spaced pre-scan locates the basin (expanding the upper end while
    the minimum sits on it); golden-section search then refines between the
    neighbouring grid points.
    """
    if not 0.0 < config.lam < 1.0:
        raise DomainError(f"arrival rate must lie in (0, 1), got {config.lam}")

    def objective(T):
        return getattr(evaluate(config.with_threshold(T)), metric)

    hi = t_max
    for _ in range(max_expansions):
        grid = np.geomspace(t_min, hi, grid_points)
        values = np.array([objective(T) for T in grid])
        i = int(np.argmin(values))
        if i < grid_points - 1:
            break
        hi *= 4.0
    else:
        raise SearchError(f"minimum still at the upper end after expanding to T={hi}")

    lo = grid[i - 1] if i > 0 else 0.0
    up = grid[i + 1]
    T, value = _golden_section(objective, lo, up)
    if value > values[i] + 1e-3:
        raise SearchError(
            f"golden-section value {value} exceeds grid minimum {values[i]} at T={grid[i]}"
        )
    if values[i] < value:
        T, value = float(grid[i]), float(values[i])
    return OptimalThreshold(float(T), float(value))


def exp_root_lambda(T: float) -> float:
    """Arrival rate at which T is the optimal exact threshold, exponential service."""
    return (T - 1.0) / (math.exp(-T) + T - 1.0)


def exp_optimal_threshold_root(lam: float, tol: float = 1e-10) -> float:
    """Optimal exact-advice threshold for exponential service by bisection.

    Solves exp(-T) = (T - 1)(1/lam - 1) on T > 1; the left side falls and the
    right side rises, so the root is unique.
    """
    if not 0.0 < lam < 1.0:
        raise DomainError(f"arrival rate must lie in (0, 1), got {lam}")
    k = 1.0 / lam - 1.0

    def phi(T):
        return math.exp(-T) - (T - 1.0) * k

    lo, hi = 1.0, 2.0
    while phi(hi) > 0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
