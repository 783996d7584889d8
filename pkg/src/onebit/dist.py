"""Service-time distributions and one-bit prediction models.

All built-in distributions are scaled to unit mean. Expectations of the
form ``E[h(X); X <= upper]`` go through :meth:`ServiceDistribution.expect`,
which each distribution may specialise with a change of variables that
keeps the integrand smooth for adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 500


class DomainError(ValueError):
    """Argument outside the region where a formula is defined."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""


def quad(func: Callable[[float], float], a: float, b: float, points=None) -> float:
    """Adaptive Gauss-Kronrod integration with a hard error check.

    Semi-infinite ranges are mapped onto a finite interval internally.
    """
    kwargs = dict(epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, full_output=1)
    if points is not None and math.isfinite(b):
        kwargs["points"] = points
    out = integrate.quad(func, a, b, **kwargs)
    value, abserr = out[0], out[1]
    if len(out) > 3 and abserr > max(1e-9, 1e-8 * abs(value)):
        raise QuadratureError(
            f"quadrature on [{a}, {b}] did not converge: value={value!r} "
            f"abserr={abserr:.3g} ({out[3]})"
        )
    return value


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) stream; the same seed gives the same draws."""
    return np.random.Generator(np.random.Philox(int(seed)))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Derive ``count`` independent 64-bit seeds from a base seed."""
    ss = np.random.SeedSequence(int(seed))
    return [int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(count)]


class ServiceDistribution:
    """Base contract for a nonnegative service-time law."""

    kind = "Custom"

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return self.expect(lambda x: x)

    @property
    def second_moment(self) -> float:
        return self.expect(lambda x: x * x)

    def expect(self, h: Callable[[float], float], upper: float = math.inf) -> float:
        """Return the integral of h(x) f(x) over [0, upper]."""
        return quad(lambda x: h(x) * self.pdf(x), 0.0, upper)

    def partial_load_integral(self, t: float) -> float:
        """Integral of x f(x) over [0, t]."""
        if t <= 0:
            return 0.0
        return self.expect(lambda x: x, upper=t)

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-cdf sampling."""
        return self.ppf(rng.random(size))


class Exponential(ServiceDistribution):
    """Unit-mean exponential, F(x) = 1 - exp(-x)."""

    kind = "Exponential"

    def cdf(self, x):
        return -np.expm1(-np.maximum(x, 0.0))

    def pdf(self, x):
        return np.where(np.asarray(x) >= 0, np.exp(-np.maximum(x, 0.0)), 0.0)

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float))

    @property
    def mean(self) -> float:
        return 1.0

    @property
    def second_moment(self) -> float:
        return 2.0

    def partial_load_integral(self, t: float) -> float:
        if t <= 0:
            return 0.0
        if math.isinf(t):
            return 1.0
        return 1.0 - (t + 1.0) * math.exp(-t)

    def expect(self, h, upper=math.inf):
        return quad(lambda x: h(x) * math.exp(-x), 0.0, upper)


class Weibull(ServiceDistribution):
    """Heavy-tailed Weibull with F(x) = 1 - exp(-sqrt(2x)); mean 1, second moment 6.

    Writing y = sqrt(2x) turns X into Y^2/2 with Y ~ Exp(1), which is how
    quadrature and sampling are done.
    """

    kind = "Weibull"

    def cdf(self, x):
        return -np.expm1(-np.sqrt(2.0 * np.maximum(x, 0.0)))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.sqrt(2.0 * x)
            return np.where(x > 0, np.exp(-r) / r, 0.0)

    def ppf(self, u):
        y = -np.log1p(-np.asarray(u, dtype=float))
        return 0.5 * y * y

    @property
    def mean(self) -> float:
        return 1.0

    @property
    def second_moment(self) -> float:
        return 6.0

    def partial_load_integral(self, t: float) -> float:
        if t <= 0:
            return 0.0
        if math.isinf(t):
            return 1.0
        r = math.sqrt(2.0 * t)
        return 1.0 - math.exp(-r) * (t + r + 1.0)

    def expect(self, h, upper=math.inf):
        ymax = math.sqrt(2.0 * upper) if math.isfinite(upper) else math.inf
        return quad(lambda y: h(0.5 * y * y) * math.exp(-y), 0.0, ymax)


class Custom(ServiceDistribution):
    """User-supplied law given by its cdf and density.

    Moments are computed by quadrature. Without an explicit ``ppf`` the
    sampler inverts the cdf numerically, which is slow but exact.
    """

    kind = "Custom"

    def __init__(self, cdf: Callable, pdf: Callable, ppf: Callable | None = None):
        self._cdf = cdf
        self._pdf = pdf
        self._ppf = ppf

    def cdf(self, x):
        return np.vectorize(self._cdf, otypes=[float])(x)

    def pdf(self, x):
        return np.vectorize(self._pdf, otypes=[float])(x)

    def expect(self, h, upper=math.inf):
        return quad(lambda x: h(x) * self._pdf(x), 0.0, upper)

    def _invert(self, u: float) -> float:
        if u <= 0.0:
            return 0.0
        hi = 1.0
        while self._cdf(hi) < u:
            hi *= 2.0
            if hi > 1e300:
                raise DomainError(f"cannot invert cdf at u={u}")
        return optimize.brentq(lambda x: self._cdf(x) - u, 0.0, hi, xtol=1e-14, rtol=1e-14)

    def ppf(self, u):
        if self._ppf is not None:
            return np.vectorize(self._ppf, otypes=[float])(u)
        return np.vectorize(self._invert, otypes=[float])(u)


DISTRIBUTIONS: dict[str, Callable[[], ServiceDistribution]] = {
    "exponential": Exponential,
    "weibull": Weibull,
}


def get_distribution(name: str) -> ServiceDistribution:
    try:
        return DISTRIBUTIONS[name.lower()]()
    except KeyError:
        raise DomainError(f"unknown distribution {name!r}; choose from {sorted(DISTRIBUTIONS)}") from None


def _check_rate(lam: float) -> None:
    if not 0.0 <= lam < 1.0:
        raise DomainError(f"arrival rate must lie in [0, 1), got {lam}")


def partial_load(dist: ServiceDistribution, lam: float, T: float) -> float:
    """Rate at which work arrives from jobs of size at most T."""
    _check_rate(lam)
    if T < 0:
        raise DomainError(f"threshold must be nonnegative, got {T}")
    return lam * dist.partial_load_integral(T)


def residual_work(dist: ServiceDistribution, lam: float) -> float:
    """Mean remaining service seen by a Poisson arrival, lambda E[X^2] / 2."""
    _check_rate(lam)
    return 0.5 * lam * dist.second_moment


def sample_service(dist: ServiceDistribution, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)


# --- prediction models -------------------------------------------------------


class PredictionModel:
    kind = "Base"

    def g(self, T: float, x):
        """Probability that a job of size x is labeled below T."""
        raise NotImplementedError

    def sample_predicted_size(self, x, rng: np.random.Generator):
        raise NotImplementedError

    def predicted_from_uniform(self, x, u):
        """Predicted size of a size-x job given a uniform draw u."""
        raise NotImplementedError


@dataclass(frozen=True)
class Perfect(PredictionModel):
    kind: str = field(default="Perfect", init=False)

    def g(self, T, x):
        return np.where(np.asarray(x) <= T, 1.0, 0.0)

    def predicted_from_uniform(self, x, u):
        return np.asarray(x, dtype=float)

    def sample_predicted_size(self, x, rng):
        return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ExponentialPrediction(PredictionModel):
    """Prediction for a size-x job is exponential with mean x."""

    kind: str = field(default="Exponential", init=False)

    def g(self, T, x):
        x = np.asarray(x, dtype=float)
        if T <= 0:
            return np.zeros_like(x)
        return -np.expm1(-T / x)

    def predicted_from_uniform(self, x, u):
        return -np.asarray(x, dtype=float) * np.log1p(-np.asarray(u, dtype=float))

    def sample_predicted_size(self, x, rng):
        x = np.asarray(x, dtype=float)
        return self.predicted_from_uniform(x, rng.random(x.shape))


PREDICTION_MODELS: dict[str, Callable[[], PredictionModel]] = {
    "perfect": Perfect,
    "exponential": ExponentialPrediction,
}


def get_prediction_model(name: str) -> PredictionModel:
    try:
        return PREDICTION_MODELS[name.lower()]()
    except KeyError:
        raise DomainError(f"unknown prediction model {name!r}; choose from {sorted(PREDICTION_MODELS)}") from None


def label_job(model: PredictionModel, T: float, x: float, rng: np.random.Generator) -> bool:
    """Draw the advice bit; True means the job is labeled below T."""
    if T < 0 or x <= 0:
        raise DomainError("need T >= 0 and x > 0")
    return bool(rng.random() < float(model.g(T, x)))
