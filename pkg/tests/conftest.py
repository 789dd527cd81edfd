import numpy as np
import pytest

from tweezer_transfer import TrapConfiguration
from tweezer_transfer.constants import H

W0 = 7.5e-6
WAVELENGTH = 810.0e-9
U0 = H * 150e6


def crossed(separation_w0=0.0, depth2=None):
    return TrapConfiguration.crossed(W0, WAVELENGTH, U0, separation_w0 * W0, depth2)


@pytest.fixture
def w0():
    return W0


@pytest.fixture
def u0():
    return U0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
