import numpy as np
import pytest

from jetles.core import FlowConfig, compute_metrics, generate_jet_grid


@pytest.fixture(scope="session")
def cfg():
    return FlowConfig(dt=0.01)


@pytest.fixture(scope="session")
def small_jet():
    return generate_jet_grid(12, 10, 13)


@pytest.fixture(scope="session")
def small_jet_metrics(small_jet):
    return compute_metrics(small_jet)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
