import numpy as np
import pytest

from nearpg.dynamics import linear_testbed, pendulum_system
from nearpg.policy import init_mlp


@pytest.fixture
def mb_bed():
    return linear_testbed("MB", 1.5, 0.1, 5)


@pytest.fixture
def pendulum():
    return pendulum_system(1e-2)


@pytest.fixture
def small_mlp():
    return init_mlp(2, 1, 8, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
