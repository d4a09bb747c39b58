import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kropinalab.scenes import builtin

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def scenes():
    return {name: builtin(name) for name in ("flat-const", "shear", "hopf-s3", "prod-r-s2")}


@pytest.fixture(scope="session")
def flat(scenes):
    return scenes["flat-const"].nav


@pytest.fixture(scope="session")
def shear(scenes):
    return scenes["shear"].nav


@pytest.fixture(scope="session")
def hopf(scenes):
    return scenes["hopf-s3"].nav


@pytest.fixture(scope="session")
def prod(scenes):
    return scenes["prod-r-s2"].nav


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
