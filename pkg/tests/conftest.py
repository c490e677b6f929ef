import os

import numpy as np
import pytest

from adgame.model import GameModel
from adgame.sim import EstimatorInit

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


@pytest.fixture
def scalar_model():
    return GameModel(
        A=np.zeros((1, 1)),
        B1=np.ones((1, 1)),
        B2=np.ones((1, 1)),
        D=np.ones((1, 1)),
        Qw=np.ones((1, 1)),
        R1=np.ones((1, 1)),
        R2=2 * np.ones((1, 1)),
    )


@pytest.fixture
def scalar_est_init():
    return EstimatorInit(
        theta0=np.array([[-0.5], [0.8], [1.3]]), cov0_scale=1.0, delta=0.5
    )


@pytest.fixture
def two_state_model():
    return GameModel(
        A=np.array([[0.0, 1.0], [-1.0, -0.5]]),
        B1=np.array([[0.0], [1.0]]),
        B2=np.array([[0.5], [0.0]]),
        D=np.array([[0.4], [0.4]]),
        Qw=np.eye(2),
        R1=np.array([[1.0]]),
        R2=np.array([[5.0]]),
    )


@pytest.fixture
def scalar_config_path():
    return os.path.join(CONFIG_DIR, "scalar.toml")


@pytest.fixture
def two_state_config_path():
    return os.path.join(CONFIG_DIR, "two_state.toml")
