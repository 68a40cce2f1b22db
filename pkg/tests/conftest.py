import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kwlab.model import Harmonic, Params

settings.register_profile(
    "kwlab", deadline=None, max_examples=int(os.environ.get("KWLAB_EXAMPLES", "25")),
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kwlab")

# parameter sets used throughout: (k, omega, A, c, mu)
STABLE_SETS = [
    (10, 10, 1.0, 10.0, 1.0),
    (10, 10, 1.0, 1.0, 1.0),
    (10, 10, 20.0, 20.0, 1.0),
    (10, 15, 100.0, 0.0, 1.0),
    (10, 2, 1.0, 0.0, 1.0),
    (10, 4, 4.0, 0.0, 1.0),
]


@pytest.fixture(scope="session")
def damped():
    return Params(mu=1.0, k=10, omega=10, a=1.0), Harmonic(10.0, 1.0)


@pytest.fixture(scope="session")
def frictionless():
    return Params(mu=0.0, k=10, omega=4, a=1.0), Harmonic(0.0, 1.0)


def wrap(dq):
    return (np.asarray(dq) + math.pi) % (2 * math.pi) - math.pi
