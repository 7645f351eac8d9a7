from datetime import date

import numpy as np
import pytest

from contagion_fit.observation_model import expected_interest
from contagion_fit.sir_dynamics import SirParams, integrate
from contagion_fit.trends_ingest import ObservationWindow


def make_window(params, days, rng=None, label="synthetic", start=date(2014, 2, 1)):
    """Window simulated from the model itself; Poisson noise only when rng is given."""
    mean = expected_interest(integrate(params, days), params.r)
    values = rng.poisson(mean).astype(float) if rng is not None else mean
    if values[0] <= 0:
        values[0] = 1.0
    return ObservationWindow(observations=tuple(float(v) for v in values), start_date=start, label=label)


@pytest.fixture
def true_params():
    # R0 = 2, generation time 1 day
    return SirParams(beta=2.0, gamma=1.0, r=50.0, i0=1e-3)


@pytest.fixture
def noisy_window(true_params):
    return make_window(true_params, 30, rng=np.random.default_rng(2014))


@pytest.fixture
def exact_window(true_params):
    return make_window(true_params, 30)
