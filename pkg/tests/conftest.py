import numpy as np
import pytest

from rhgc.services.control.canonical import LtiSystem, to_canonical
from rhgc.services.control.lqt import random_quadratic_instance
from rhgc.services.control.reformulate import ZCost
from rhgc.services.experiments.instances import random_controllable_system

SWEEP_A = [[0.0, 1.0], [-1.0 / 6.0, 5.0 / 6.0]]
SWEEP_B = [[0.0], [1.0]]


def make_quadratic_zcost(seed: int, n: int = 3, m: int = 1, N: int = 15):
    rng = np.random.default_rng(seed)
    canonical = to_canonical(random_controllable_system(n, m, rng))
    instance = random_quadratic_instance(canonical, N, rng)
    return ZCost(canonical, instance.to_costs()), instance


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def sweep_canonical():
    return to_canonical(LtiSystem(A=np.array(SWEEP_A), B=np.array(SWEEP_B)))


@pytest.fixture
def sweep_zcost(sweep_canonical):
    rng = np.random.default_rng(3)
    instance = random_quadratic_instance(sweep_canonical, 20, rng)
    return ZCost(sweep_canonical, instance.to_costs())


@pytest.fixture
def quadratic_zcost():
    zcost, _ = make_quadratic_zcost(seed=7, n=4, m=2, N=15)
    return zcost


@pytest.fixture
def sweep_config_data():
    """Small explicit-system sweep used by the harness tests."""
    return {
        "name": "small_sweep",
        "instance": {
            "source": "explicit",
            "N": 12,
            "system": {"A": SWEEP_A, "B": SWEEP_B},
        },
        "algorithms": ["foss", "rhgd", "rhag", "rhtm", "submpc-1"],
        "W": [1, 2, 3, 4, 5],
        "seeds": [0, 1],
    }
