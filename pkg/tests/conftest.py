import numpy as np
import pytest

from kpzlab.grid import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def spec1d():
    return GridSpec(d=1, N=128, L_box=32.0)


@pytest.fixture
def spec2d():
    return GridSpec(d=2, N=64, L_box=32.0)
