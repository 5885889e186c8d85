import numpy as np
import pytest

from sinai.env import DistSpec, Environment


@pytest.fixture
def two_point():
    return DistSpec.two_point(0.3)


@pytest.fixture
def flat_env():
    def make(lo=-200, hi=200):
        return Environment.from_alphas(np.full(hi - lo + 1, 0.5), lo=lo)
    return make
