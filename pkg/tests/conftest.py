import numpy as np
import pytest

from evosnn import backend
from evosnn.config import Config

BACKENDS = backend.available()


@pytest.fixture(params=BACKENDS)
def backend_name(request):
    return request.param


@pytest.fixture
def small_cfg():
    """A cramped arena where captures happen every few dozen steps."""
    return Config().replace(arena={"width": 60.0, "height": 60.0, "n_food": 10})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
