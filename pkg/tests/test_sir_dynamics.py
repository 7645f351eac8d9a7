import math
from types import SimpleNamespace
from unittest.mock import patch

import numpy as np
import pytest

from contagion_fit.errors import IntegrationError
from contagion_fit.sir_dynamics import (
    IntegratorSettings,
    SirParams,
    SirState,
    Trajectory,
    basic_reproduction_number,
    daily_incidence,
    derivatives,
    effective_r,
    final_size_oracle,
    integrate,
)


def trajectory_from_columns(s, c):
    s = np.asarray(s, dtype=float)
    c = np.asarray(c, dtype=float)
    i = np.zeros_like(s)
    states = np.column_stack([s, i, 1.0 - s, c])
    return Trajectory.from_states(np.arange(len(s)), states)


def test_derivatives_disease_free_equilibrium():
    params = SirParams(beta=2.0, gamma=1.0, r=1.0, i0=0.01)
    assert list(derivatives(SirState(1.0, 0.0, 0.0, 0.0), params)) == [0.0, 0.0, 0.0, 0.0]


def test_derivatives_half_infected():
    params = SirParams(beta=2.0, gamma=1.0, r=1.0, i0=0.01)
    rates = derivatives(SirState(0.5, 0.5, 0.0, 0.5), params)
    assert list(rates) == pytest.approx([-0.5, 0.0, 0.5, 0.5])


def test_derivatives_conserve_population():
    rng = np.random.default_rng(1)
    for _ in range(20):
        s, i = rng.uniform(0, 0.5, size=2)
        params = SirParams(beta=rng.uniform(0.1, 5), gamma=rng.uniform(0.1, 3), r=1.0, i0=0.01)
        rates = derivatives(SirState(s, i, 1 - s - i, i), params)
        assert rates[:3].sum() == pytest.approx(0.0, abs=1e-15)


def test_params_validation():
    with pytest.raises(ValueError, match="gamma"):
        SirParams(beta=1.0, gamma=0.0, r=1.0, i0=0.01)
    with pytest.raises(ValueError, match="i0"):
        SirParams(beta=1.0, gamma=1.0, r=1.0, i0=1.5)
    with pytest.raises(ValueError, match="r must be positive"):
        SirParams(beta=1.0, gamma=1.0, r=-2.0, i0=0.01)


def test_integrate_initial_condition():
    params = SirParams(beta=2.0, gamma=1.0, r=50.0, i0=0.001)
    traj = integrate(params, 10)
    assert tuple(traj.state(0)) == pytest.approx((0.999, 0.001, 0.0, 0.001))
    assert traj.horizon == 10
    assert len(traj.incidence) == 10


def test_integrate_without_transmission_decays_exponentially():
    params = SirParams(beta=0.0, gamma=0.7, r=1.0, i0=0.02)
    traj = integrate(params, 20)
    expected = 0.02 * np.exp(-0.7 * traj.times)
    assert np.max(np.abs(traj.i - expected)) < 1e-5
    assert np.allclose(traj.s, 0.98)


def test_integrate_matches_final_size_relation():
    params = SirParams(beta=2.0, gamma=1.0, r=1.0, i0=0.001)
    traj = integrate(params, 40)
    assert abs(traj.c[-1] - final_size_oracle(2.0, 1.0 - 0.001)) <= 1e-4


def test_final_size_equivalence_across_r0():
    # 20 parameter sets with R0 in [1.2, 3.5]; the horizon is long enough for I(T) < 1e-8.
    gammas = np.tile([0.5, 1.0, 1.5, 2.0], 5)
    for r0, gamma in zip(np.linspace(1.2, 3.5, 20), gammas):
        params = SirParams(beta=r0 * gamma, gamma=gamma, r=1.0, i0=1e-3)
        traj = integrate(params, 800)
        assert abs(traj.i[-1]) < 1e-8
        assert abs(traj.c[-1] - final_size_oracle(r0, 1.0 - 1e-3)) <= 1e-4


def test_conservation_and_monotonicity_for_random_parameters():
    rng = np.random.default_rng(9)
    for _ in range(100):
        params = SirParams(
            beta=rng.uniform(0.05, 5.0),
            gamma=rng.uniform(0.1, 3.0),
            r=1.0,
            i0=10 ** rng.uniform(-6, -1),
        )
        traj = integrate(params, 60)
        assert np.max(np.abs(traj.s + traj.i + traj.rec - 1.0)) <= 1e-6
        assert np.all(np.diff(traj.s) <= 1e-9)
        assert np.all(np.diff(traj.c) >= -1e-9)


def test_halving_tolerances_barely_moves_incidence():
    params = SirParams(beta=1.2, gamma=1.0, r=1.0, i0=1e-3)
    coarse = integrate(params, 20)
    fine = integrate(params, 20, IntegratorSettings().halved())
    assert np.max(np.abs(coarse.incidence - fine.incidence)) < 1e-7


def test_integrate_rejects_zero_horizon():
    with pytest.raises(ValueError, match="horizon"):
        integrate(SirParams(beta=2.0, gamma=1.0, r=1.0, i0=0.01), 0)


def test_integrate_reports_failure_time():
    failed = SimpleNamespace(
        status=-1,
        message="Required step size is less than spacing between numbers.",
        t=np.array([0.0, 3.5]),
        y=np.zeros((4, 2)),
    )
    with patch("contagion_fit.sir_dynamics.solve_ivp", return_value=failed):
        with pytest.raises(IntegrationError, match="t=3.5") as excinfo:
            integrate(SirParams(beta=2.0, gamma=1.0, r=1.0, i0=0.01), 10)
    assert excinfo.value.time == 3.5


def test_daily_incidence_differences():
    traj = trajectory_from_columns(s=[0.999, 0.997, 0.996], c=[0.001, 0.003, 0.004])
    assert daily_incidence(traj) == pytest.approx([0.002, 0.001])


def test_daily_incidence_constant_cumulative():
    traj = trajectory_from_columns(s=[0.9] * 4, c=[0.1] * 4)
    assert list(daily_incidence(traj)) == [0.0, 0.0, 0.0]


def test_daily_incidence_clamps_rounding_noise():
    traj = trajectory_from_columns(s=[0.9, 0.9], c=[0.1, 0.1 - 1e-14])
    assert list(daily_incidence(traj)) == [0.0]


def test_daily_incidence_telescopes():
    traj = integrate(SirParams(beta=2.5, gamma=1.0, r=1.0, i0=0.001), 30)
    assert daily_incidence(traj).sum() == pytest.approx(traj.c[-1] - traj.c[0], abs=1e-12)


def test_basic_reproduction_number():
    assert basic_reproduction_number(SirParams(beta=2.0, gamma=1.0, r=1.0, i0=0.01)) == 2.0
    assert basic_reproduction_number(SirParams(beta=0.6, gamma=0.6, r=1.0, i0=0.01)) == 1.0


def test_basic_reproduction_number_neknomination_medians():
    params = SirParams(beta=0.9457, gamma=0.4902, r=1.0, i0=0.01)
    assert basic_reproduction_number(params) == pytest.approx(1.93, abs=0.005)
    assert params.generation_time == pytest.approx(2.04, abs=0.005)


def test_effective_r_starts_at_r0_and_declines():
    params = SirParams(beta=2.0, gamma=1.0, r=1.0, i0=1e-6)
    traj = integrate(params, 40)
    rt = effective_r(traj, params)
    assert rt[0] == pytest.approx(2.0, rel=1e-5)
    assert np.all(np.diff(rt) <= 1e-9)
    assert rt[-1] < 1.0


def test_effective_r_threshold():
    params = SirParams(beta=2.0, gamma=1.0, r=1.0, i0=0.01)
    traj = trajectory_from_columns(s=[0.99, 0.5], c=[0.01, 0.5])
    assert effective_r(traj, params)[1] == pytest.approx(1.0)


def test_final_size_oracle_r0_two():
    assert final_size_oracle(2.0, 1.0 - 1e-9) == pytest.approx(0.7968, abs=1e-4)


def test_final_size_oracle_subcritical():
    assert final_size_oracle(0.5, 1.0) == pytest.approx(0.0, abs=1e-9)
    assert final_size_oracle(0.5, 1.0 - 1e-6) < 1e-5


def test_final_size_oracle_increases_with_r0():
    sizes = [final_size_oracle(r0, 0.999) for r0 in (1.2, 1.5, 2.0, 3.0, 5.0)]
    assert sizes == sorted(sizes)
    assert all(0 < z < 1 for z in sizes)


def test_final_size_oracle_rejects_non_positive_r0():
    with pytest.raises(ValueError):
        final_size_oracle(0.0, 0.99)


def test_final_size_oracle_non_convergence():
    with pytest.raises(ArithmeticError):
        final_size_oracle(3.0, 0.999, max_iter=3)


def test_trajectory_frame_columns():
    frame = integrate(SirParams(beta=2.0, gamma=1.0, r=1.0, i0=0.001), 5).to_frame()
    assert list(frame.columns) == ["day", "S", "I", "R", "C", "incidence"]
    assert len(frame) == 6
    assert math.isnan(frame["incidence"].iloc[0])
