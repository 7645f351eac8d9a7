"""
Posterior summaries and outbreak-level outputs computed from MCMC draws.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.metrics import r2_score

from contagion_fit.errors import InputError
from contagion_fit.mcmc_engine import PosteriorSamples, map_estimate
from contagion_fit.observation_model import expected_interest
from contagion_fit.sir_dynamics import (
    DEFAULT_INTEGRATOR,
    IntegratorSettings,
    SirParams,
    effective_r,
    integrate,
)
from contagion_fit.trends_ingest import ObservationWindow

logger = logging.getLogger(__name__)

PERCENTILES = (2.5, 50.0, 97.5)
MIN_SUMMARY_DRAWS = 100
DEFAULT_ENSEMBLE = 1000
PEAK_I0 = 1e-3
PEAK_HORIZON = 60


@dataclass(frozen=True)
class Interval:
    median: float
    lower95: float
    upper95: float

    @classmethod
    def from_values(cls, values) -> "Interval":
        lower, median, upper = np.percentile(np.asarray(values, dtype=float), PERCENTILES)
        return cls(median=float(median), lower95=float(lower), upper95=float(upper))

    def to_dict(self) -> dict:
        return {"median": self.median, "lower95": self.lower95, "upper95": self.upper95}

    def __str__(self) -> str:
        return f"{self.median:.3g} ({self.lower95:.3g}-{self.upper95:.3g})"


@dataclass(frozen=True)
class ParamSummary:
    r0: Interval
    generation_time: Interval
    r: Interval
    i0: Interval
    beta: Interval
    gamma: Interval

    def to_dict(self) -> dict:
        return {name: getattr(self, name).to_dict() for name in self.__dataclass_fields__}


def summarize(samples: PosteriorSamples) -> ParamSummary:
    """Medians and central 95% credible intervals of the derived quantities."""
    if len(samples) < MIN_SUMMARY_DRAWS:
        raise InputError(f"Need at least {MIN_SUMMARY_DRAWS} draws to summarize, got {len(samples)}")
    return ParamSummary(
        r0=Interval.from_values(samples.r0),
        generation_time=Interval.from_values(samples.generation_time),
        r=Interval.from_values(samples.column("r")),
        i0=Interval.from_values(samples.column("i0")),
        beta=Interval.from_values(samples.column("beta")),
        gamma=Interval.from_values(samples.column("gamma")),
    )


@dataclass
class Envelope:
    """Per-day median and central 95% band over an ensemble of simulations."""

    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_draws: int

    @classmethod
    def from_ensemble(cls, ensemble: np.ndarray) -> "Envelope":
        lower, median, upper = np.percentile(ensemble, PERCENTILES, axis=0)
        return cls(median=median, lower=lower, upper=upper, n_draws=ensemble.shape[0])


# Fit band around the observed series.
PredictiveEnvelope = Envelope


@dataclass
class EffectiveREnvelope(Envelope):
    """R(t) band on days 0..T, day 0 being the model initialisation day."""

    crossing_day: Optional[int] = None


def _draw_indices(available: int, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    if available == 0:
        raise InputError("Posterior has no draws")
    if n_draws < 1:
        raise InputError(f"n_draws must be at least 1, got {n_draws}")
    return rng.choice(available, size=n_draws, replace=n_draws > available)


def posterior_predictive(
    samples: PosteriorSamples,
    window: ObservationWindow,
    n_draws: int = DEFAULT_ENSEMBLE,
    rng: Optional[np.random.Generator] = None,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> Envelope:
    """Quantiles of Poisson-noised interest simulated from posterior draws."""
    rng = rng if rng is not None else np.random.default_rng()
    indices = _draw_indices(len(samples), n_draws, rng)
    days = len(window)
    simulations = np.empty((n_draws, days))
    for row, index in enumerate(indices):
        params = samples.params(index)
        mean = np.maximum(expected_interest(integrate(params, days, settings), params.r), 0.0)
        simulations[row] = rng.poisson(mean)
    return Envelope.from_ensemble(simulations)


def effective_r_envelope(
    samples: PosteriorSamples,
    window: ObservationWindow,
    n_draws: int = DEFAULT_ENSEMBLE,
    rng: Optional[np.random.Generator] = None,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> EffectiveREnvelope:
    rng = rng if rng is not None else np.random.default_rng()
    indices = _draw_indices(len(samples), n_draws, rng)
    days = len(window)
    trajectories = np.empty((n_draws, days + 1))
    for row, index in enumerate(indices):
        params = samples.params(index)
        trajectories[row] = effective_r(integrate(params, days, settings), params)

    band = Envelope.from_ensemble(trajectories)
    below = np.flatnonzero(band.median < 1.0)
    return EffectiveREnvelope(
        median=band.median,
        lower=band.lower,
        upper=band.upper,
        n_draws=n_draws,
        crossing_day=int(below[0]) if below.size else None,
    )


def envelope_frame(
    window: ObservationWindow, fit: Envelope, rt: EffectiveREnvelope
) -> pd.DataFrame:
    """`day,obs,median,lo95,hi95,Rt_median,Rt_lo,Rt_hi` for observation days 1..T."""
    return pd.DataFrame(
        {
            "day": np.arange(1, len(window) + 1),
            "obs": window.values,
            "median": fit.median,
            "lo95": fit.lower,
            "hi95": fit.upper,
            "Rt_median": rt.median[1:],
            "Rt_lo": rt.lower[1:],
            "Rt_hi": rt.upper[1:],
        }
    )


def r_squared(observed, predicted) -> float:
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape:
        raise InputError(f"Length mismatch: {observed.size} observed vs {predicted.size} predicted")
    if observed.size < 2:
        raise InputError("R^2 needs at least two observations")
    if np.var(observed) == 0:
        raise InputError("R^2 is undefined for a series with zero variance")
    return float(r2_score(observed, predicted))


def predicted_interest(
    params: SirParams, days: int, settings: IntegratorSettings = DEFAULT_INTEGRATOR
) -> np.ndarray:
    """Noise-free mean interest r * (100 c_t) for days 1..days."""
    return expected_interest(integrate(params, days, settings), params.r)


@dataclass
class ValidationReport:
    r2_in_sample: float
    r2_out_sample: Optional[float]
    map_params: SirParams
    in_sample_label: str
    out_sample_label: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "r2_in_sample": self.r2_in_sample,
            "r2_out_sample": self.r2_out_sample,
            "in_sample_label": self.in_sample_label,
            "out_sample_label": self.out_sample_label,
            "map_params": {
                "beta": self.map_params.beta,
                "gamma": self.map_params.gamma,
                "r": self.map_params.r,
                "i0": self.map_params.i0,
            },
        }


def validate(
    samples: PosteriorSamples,
    window_a: ObservationWindow,
    window_b: Optional[ObservationWindow] = None,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> ValidationReport:
    """
    R^2 of the MAP trajectory against the fitted window and, optionally, another
    region's window. Each window is anchored at its own first positive day.
    """
    params = map_estimate(samples)
    r2_a = r_squared(window_a.values, predicted_interest(params, len(window_a), settings))
    r2_b = None
    if window_b is not None:
        r2_b = r_squared(window_b.values, predicted_interest(params, len(window_b), settings))
    return ValidationReport(
        r2_in_sample=r2_a,
        r2_out_sample=r2_b,
        map_params=params,
        in_sample_label=window_a.label,
        out_sample_label=window_b.label if window_b is not None else None,
    )


@dataclass
class PeakTiming:
    mean: float
    sd: float
    days: np.ndarray
    truncated: int
    i0: float

    def to_dict(self) -> dict:
        return {
            "mean_days": self.mean,
            "sd_days": self.sd,
            "n_draws": int(self.days.size),
            "truncated": self.truncated,
            "i0": self.i0,
            "days": [int(d) for d in self.days],
        }


def peak_day(
    params: SirParams, horizon: int = PEAK_HORIZON, settings: IntegratorSettings = DEFAULT_INTEGRATOR
):
    """
    Day of maximum daily incidence (earliest on ties), counted from initialisation.

    Returns (day, interior); interior is False when the maximum sits on the last day.
    """
    incidence = integrate(params, horizon, settings).incidence
    day = int(np.argmax(incidence)) + 1
    return day, day < horizon


def peak_timing(
    samples: PosteriorSamples,
    n_draws: int = DEFAULT_ENSEMBLE,
    i0: float = PEAK_I0,
    rng: Optional[np.random.Generator] = None,
    horizon: int = PEAK_HORIZON,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> PeakTiming:
    """Peak day of outbreaks started from a fixed infectious fraction, per posterior draw."""
    rng = rng if rng is not None else np.random.default_rng()
    indices = _draw_indices(len(samples), n_draws, rng)
    days = np.empty(n_draws, dtype=int)
    truncated = 0
    for row, index in enumerate(indices):
        drawn = samples.params(index)
        params = SirParams(beta=drawn.beta, gamma=drawn.gamma, r=drawn.r, i0=i0)
        day, interior = peak_day(params, horizon, settings)
        if not interior:
            day, interior = peak_day(params, 2 * horizon, settings)
            if not interior:
                truncated += 1
        days[row] = day

    if truncated:
        logger.warning(f"{truncated} of {n_draws} simulated outbreaks had not peaked by day {2 * horizon}")
    sd = float(np.std(days, ddof=1)) if n_draws > 1 else 0.0
    return PeakTiming(mean=float(np.mean(days)), sd=sd, days=days, truncated=truncated, i0=i0)


def extinction_probability(r0: float) -> float:
    """1 - 1/R0 floored at zero."""
    if r0 <= 0:
        raise ValueError(f"r0 must be positive, got {r0}")
    return max(0.0, 1.0 - 1.0 / r0)


def incidence_envelope(
    samples: PosteriorSamples,
    horizon: int,
    n_draws: int = DEFAULT_ENSEMBLE,
    i0: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> Envelope:
    """Noise-free daily incidence quantiles over posterior draws, optionally re-seeded at i0."""
    rng = rng if rng is not None else np.random.default_rng()
    indices = _draw_indices(len(samples), n_draws, rng)
    ensemble = np.empty((n_draws, horizon))
    for row, index in enumerate(indices):
        params = samples.params(index)
        if i0 is not None:
            params = SirParams(beta=params.beta, gamma=params.gamma, r=params.r, i0=i0)
        ensemble[row] = integrate(params, horizon, settings).incidence
    return Envelope.from_ensemble(ensemble)
