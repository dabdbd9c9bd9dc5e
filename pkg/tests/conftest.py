import numpy as np
import pytest

from phsdp.maglev import MaglevParams, MaglevReference, maglev_setup


@pytest.fixture(scope="session")
def params():
    return MaglevParams()


@pytest.fixture(scope="session")
def maglev(params):
    """``(model, ref, ctrl)`` with the benchmark gains and sinusoidal reference."""
    return maglev_setup(params, MaglevReference.sinusoid())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
