import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from metawalk.model import ChainSpec, IntegerInterval, example_walk_spec
from metawalk.transient import factorize

settings.register_profile("metawalk", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("metawalk")


@pytest.fixture(scope="session")
def walk2401():
    return example_walk_spec(2401)


@pytest.fixture(scope="session")
def walk2401_fac(walk2401):
    return factorize(walk2401)


def random_spec(rng, size, boundary="reflecting", lo=0, spread=1.0):
    up = np.exp(rng.uniform(-spread, spread, size))
    down = np.exp(rng.uniform(-spread, spread, size))
    return ChainSpec.from_rates(IntegerInterval(lo, lo + size - 1), up, down, boundary)
