import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from monodiss.rng import random_field, stream
from monodiss.spectral import make_grid

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def grid1():
    return make_grid(1, 1.0, 16)


@pytest.fixture
def rand_field():
    def make(grid, seed=0, amplitude=1.0, n_modes=8, decay=2.0):
        return random_field(grid, stream(seed), amplitude=amplitude, n_modes=n_modes, decay=decay)

    return make


def sine_values(x, m=1, L=1.0):
    return np.sin(np.pi * m * x / L)
