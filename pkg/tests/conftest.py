import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mutualmf.measure import SelfSimilarSpec, multinomial_cascade

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def binomial_spec():
    return SelfSimilarSpec.badic((0.7, 0.3), (0.5, 0.5))


@pytest.fixture(scope="session")
def uniform_spec():
    return SelfSimilarSpec.badic((0.5, 0.5), (0.5, 0.5))


def cascade_pair(spec, depth):
    return multinomial_cascade(spec, "first", depth), multinomial_cascade(spec, "second", depth)


@pytest.fixture(scope="session")
def binomial14(binomial_spec):
    return cascade_pair(binomial_spec, 14)


@pytest.fixture(scope="session")
def binomial12(binomial_spec):
    return cascade_pair(binomial_spec, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
