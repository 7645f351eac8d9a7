"""
Deterministic SIR dynamics with a cumulative-infection compartment.

    dS/dt = -beta S I
    dI/dt =  beta S I - gamma I
    dR/dt =  gamma I
    dC/dt =  beta S I

All compartments are population proportions. Integration uses scipy's RK45
(Dormand-Prince 5(4) pair) and samples its dense output on a daily grid.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from contagion_fit.errors import IntegrationError

logger = logging.getLogger(__name__)

INCIDENCE_CLAMP = 1e-12


@dataclass(frozen=True)
class SirParams:
    """
    beta: transmission rate per day
    gamma: recovery rate per day (1/gamma is the mean infectious period)
    r: interest units generated per percentage point of the population newly infected per day
    i0: proportion of the population initially infectious
    """

    beta: float
    gamma: float
    r: float
    i0: float

    def __post_init__(self) -> None:
        values = (self.beta, self.gamma, self.r, self.i0)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"Parameters must be finite: {values}")
        # beta == 0 is allowed so the infection-free decay can be integrated;
        # the prior support still requires beta > 0.
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.r <= 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not 0 < self.i0 < 1:
            raise ValueError(f"i0 must lie in (0, 1), got {self.i0}")

    @property
    def r0(self) -> float:
        return basic_reproduction_number(self)

    @property
    def generation_time(self) -> float:
        return 1.0 / self.gamma

    def as_array(self) -> np.ndarray:
        return np.array([self.beta, self.gamma, self.r, self.i0], dtype=float)

    @classmethod
    def from_array(cls, values) -> "SirParams":
        beta, gamma, r, i0 = (float(v) for v in values)
        return cls(beta=beta, gamma=gamma, r=r, i0=i0)


class SirState(NamedTuple):
    s: float
    i: float
    rec: float
    c: float


@dataclass(frozen=True)
class IntegratorSettings:
    rtol: float = 1e-6
    atol: float = 1e-8
    method: str = "RK45"

    def halved(self) -> "IntegratorSettings":
        return IntegratorSettings(rtol=self.rtol / 2, atol=self.atol / 2, method=self.method)


DEFAULT_INTEGRATOR = IntegratorSettings()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution on the grid t = 0, 1, ..., T; `states` has one row (S, I, R, C) per day."""

    times: np.ndarray
    states: np.ndarray
    incidence: np.ndarray

    @classmethod
    def from_states(cls, times, states) -> "Trajectory":
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        times.setflags(write=False)
        states.setflags(write=False)
        incidence = incidence_from_cumulative(states[:, 3])
        incidence.setflags(write=False)
        return cls(times=times, states=states, incidence=incidence)

    @property
    def horizon(self) -> int:
        return len(self.times) - 1

    @property
    def s(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def i(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def rec(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def c(self) -> np.ndarray:
        return self.states[:, 3]

    def state(self, day: int) -> SirState:
        return SirState(*(float(v) for v in self.states[day]))

    def to_frame(self) -> pd.DataFrame:
        """Rows `day,S,I,R,C,incidence`; incidence on day 0 is undefined (NaN)."""
        return pd.DataFrame(
            {
                "day": self.times.astype(int),
                "S": self.s,
                "I": self.i,
                "R": self.rec,
                "C": self.c,
                "incidence": np.concatenate([[np.nan], self.incidence]),
            }
        )


def derivatives(state, params: SirParams) -> np.ndarray:
    s, i, _, _ = state
    infection = params.beta * s * i
    recovery = params.gamma * i
    return np.array([-infection, infection - recovery, recovery, infection])


def initial_state(params: SirParams) -> SirState:
    # Initially infectious individuals already count towards cumulative infections.
    return SirState(s=1.0 - params.i0, i=params.i0, rec=0.0, c=params.i0)


def integrate(
    params: SirParams,
    horizon_days: int,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> Trajectory:
    if horizon_days < 1:
        raise ValueError(f"horizon_days must be at least 1, got {horizon_days}")

    grid = np.arange(horizon_days + 1, dtype=float)
    beta, gamma = params.beta, params.gamma

    def rhs(_t, y):
        infection = beta * y[0] * y[1]
        recovery = gamma * y[1]
        return [-infection, infection - recovery, recovery, infection]

    solution = solve_ivp(
        rhs,
        (0.0, float(horizon_days)),
        list(initial_state(params)),
        method=settings.method,
        t_eval=grid,
        rtol=settings.rtol,
        atol=settings.atol,
    )
    if solution.status != 0 or solution.y.shape[1] != grid.size:
        failed_at = float(solution.t[-1]) if solution.t.size else 0.0
        raise IntegrationError(f"ODE integration failed: {solution.message}", failed_at)

    return Trajectory.from_states(grid, solution.y.T)


def incidence_from_cumulative(cumulative) -> np.ndarray:
    """Day-on-day differences of C; floating-point noise below zero is clamped."""
    incidence = np.diff(np.asarray(cumulative, dtype=float))
    incidence[(incidence < 0) & (incidence > -INCIDENCE_CLAMP)] = 0.0
    return incidence


def daily_incidence(traj: Trajectory) -> np.ndarray:
    if len(traj.times) < 2:
        raise ValueError("Trajectory needs at least two grid points")
    return traj.incidence.copy()


def basic_reproduction_number(params: SirParams) -> float:
    return params.beta / params.gamma


def effective_r(traj: Trajectory, params: SirParams) -> np.ndarray:
    return basic_reproduction_number(params) * traj.s


def final_size_oracle(
    r0: float,
    s0: float,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> float:
    """
    Solve z = 1 - s0 exp(-r0 z) by damped fixed-point iteration.

    z is the fraction ever infected, initial infectious included. When r0 * s0 <= 1
    the iteration starts from the small root 1 - s0, which tends to 0 as i0 -> 0.
    """
    if r0 <= 0:
        raise ValueError(f"r0 must be positive, got {r0}")
    z = 1.0 if r0 * s0 > 1 else 1.0 - s0
    for _ in range(max_iter):
        update = 1.0 - s0 * math.exp(-r0 * z)
        z_next = (1.0 - damping) * z + damping * update
        if abs(z_next - z) < tol:
            return z_next
        z = z_next
    raise ArithmeticError(f"Final-size iteration did not converge for r0={r0}, s0={s0}")
