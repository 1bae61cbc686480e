import numpy as np
import pytest

from polyfilt.heston import HestonParams


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def desk():
    """Heston parameters of the worked example, stationary initial law."""
    return HestonParams(kappa=1.0, m=0.16, sigma=0.3, rho=-0.5)
