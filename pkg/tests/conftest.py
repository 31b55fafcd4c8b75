import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thincell.domain import CellGeometry, FieldConfig, derive_thermal

settings.register_profile(
    "thincell", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("thincell")

T_120C = 393.15
N_2E13_CM3 = 2e19


@pytest.fixture(scope="session")
def ensemble():
    return derive_thermal(T_120C, N_2E13_CM3)


@pytest.fixture(scope="session")
def cell5():
    return CellGeometry(W=5e-6, L=4e-3)


@pytest.fixture(scope="session")
def cell30():
    return CellGeometry(W=30e-6, L=4e-3)


@pytest.fixture(scope="session")
def no_perp():
    return FieldConfig(B_perp=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
