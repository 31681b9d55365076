import numpy as np
import pytest

from bvwiener.kernels import NormalizedDirection
from bvwiener.steps import StepFunction

RHO0 = 0.3989422804014327


@pytest.fixture
def unit_k():
    return NormalizedDirection(StepFunction([0.0, 1.0], [1.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
