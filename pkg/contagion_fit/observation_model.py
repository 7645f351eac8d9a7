"""
Poisson observation process linking model incidence to daily interest, plus the
gamma prior on the mean infectious period and the resulting log-posterior.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import gammaln

from contagion_fit.errors import IntegrationError
from contagion_fit.sir_dynamics import (
    DEFAULT_INTEGRATOR,
    IntegratorSettings,
    SirParams,
    Trajectory,
    integrate,
)
from contagion_fit.trends_ingest import ObservationWindow

logger = logging.getLogger(__name__)

MEAN_FLOOR = 1e-10
# r is defined per percentage point of the population.
PERCENT = 100.0


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior on the mean infectious period 1/gamma (shape/rate parameterisation)."""

    shape: float = 10.0
    rate: float = 10.0

    def __post_init__(self) -> None:
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError(f"Gamma prior needs positive shape and rate, got {self.shape}, {self.rate}")

    @classmethod
    def from_moments(cls, mean: float = 1.0, variance: float = 0.1) -> "GammaPrior":
        if mean <= 0 or variance <= 0:
            raise ValueError(f"Prior mean and variance must be positive, got {mean}, {variance}")
        return cls(shape=mean**2 / variance, rate=mean / variance)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2

    def _dist(self):
        return stats.gamma(a=self.shape, scale=1.0 / self.rate)

    def log_pdf(self, infectious_period: float) -> float:
        return float(self._dist().logpdf(infectious_period))

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)


@dataclass(frozen=True)
class ParameterBounds:
    """Support for the flat priors on beta, r and i0."""

    beta_max: float = 100.0
    r_max: float = 1e6
    i0_max: float = 0.5

    def contains(self, params: SirParams) -> bool:
        return (
            0 < params.beta <= self.beta_max
            and params.gamma > 0
            and 0 < params.r <= self.r_max
            and 0 < params.i0 <= self.i0_max
        )


DEFAULT_BOUNDS = ParameterBounds()


def expected_interest(traj: Trajectory, r: float) -> np.ndarray:
    """Poisson mean per observed day: r times incidence in percentage points."""
    return r * PERCENT * traj.incidence


def poisson_loglik(observed, mean):
    """
    Poisson log-density with the continuous Gamma extension for non-integer counts.

    Works elementwise on arrays; scalars in give a float back.
    """
    y = np.asarray(observed, dtype=float)
    mu = np.maximum(np.asarray(mean, dtype=float), MEAN_FLOOR)
    value = y * np.log(mu) - mu - gammaln(y + 1.0)
    return float(value) if value.ndim == 0 else value


def series_loglik(
    window: ObservationWindow,
    params: SirParams,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> float:
    # Day 0 of the trajectory is the day before the first observation.
    try:
        traj = integrate(params, len(window), settings)
    except IntegrationError as e:
        logger.warning(f"Likelihood set to -inf for {params}: {e}")
        return -math.inf
    return float(np.sum(poisson_loglik(window.values, expected_interest(traj, params.r))))


def log_prior(
    params: SirParams,
    prior: GammaPrior,
    bounds: ParameterBounds = DEFAULT_BOUNDS,
) -> float:
    if not bounds.contains(params):
        return -math.inf
    return prior.log_pdf(params.generation_time)


def log_posterior(
    window: ObservationWindow,
    params: SirParams,
    prior: GammaPrior,
    bounds: ParameterBounds = DEFAULT_BOUNDS,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> float:
    """Unnormalised log-posterior; the likelihood is skipped outside prior support."""
    prior_value = log_prior(params, prior, bounds)
    if not math.isfinite(prior_value):
        return -math.inf
    value = prior_value + series_loglik(window, params, settings)
    return value if not math.isnan(value) else -math.inf
