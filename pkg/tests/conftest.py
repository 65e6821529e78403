import numpy as np
import pytest

from semgrasp import hand, kernels


@pytest.fixture(scope="session")
def asset():
    a = hand.default_asset()
    kernels.warmup(a)
    return a


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
