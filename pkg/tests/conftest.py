import numpy as np
import pytest

from dprobust import MixtureSpec


@pytest.fixture
def spec():
    """The mixture used throughout the planar experiments."""
    return MixtureSpec(theta=1.0, sigma=0.2, K=4.0, d=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
