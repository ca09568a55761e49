import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relnav.dynamics import MU_EARTH, OrbitParams

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

A_REF = 6790.1e3


@pytest.fixture
def params() -> OrbitParams:
    return OrbitParams(A_REF, MU_EARTH)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
