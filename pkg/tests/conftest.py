import numpy as np
import pytest

from config.settings import Config
from src.kernels_entropies.kernels import TabulatedRadial, tabulation_grid
from src.measures.radial_density import from_profile, uniform_ball

GRID = 256


@pytest.fixture(autouse=True)
def small_threads(monkeypatch):
    monkeypatch.setattr(Config, 'THREADS', 2)


@pytest.fixture
def unit_interval():
    return uniform_ball(1.0, 1, GRID)


@pytest.fixture
def unit_disk():
    return uniform_ball(1.0, 2, GRID)


@pytest.fixture
def bumpy_disk():
    """Non-monotone radial density in the plane"""
    return from_profile(lambda r: np.exp(-(r - 2.0) ** 2 / 0.3) + 0.2 * np.exp(-r ** 2), 2, 4.0, GRID)


@pytest.fixture(scope='session')
def log_growth_kernel():
    """Tabulated w(r) = 3 log(1 + r) with its exact derivative"""
    return TabulatedRadial.from_function(lambda r: 3 * np.log1p(r), tabulation_grid(1e4),
                                         derivative=lambda r: 3 / (1 + r))


@pytest.fixture(scope='session')
def capped_kernel():
    """Tabulated w(r) = min(r^2, 4) on [0, 32]"""
    return TabulatedRadial.from_function(lambda r: np.minimum(r ** 2, 4.0), np.linspace(0.0, 32.0, 3201))
