import numpy as np
import pytest

from robust_sysid import DistributionSpec, LtiSystem, default_system


@pytest.fixture
def sys3():
    """The default n=3, m=2, p=2 truth system."""
    return default_system()


@pytest.fixture
def scalar_sys():
    return LtiSystem([[0.5]], [[1.0]], [[1.0]], [[0.0]])


@pytest.fixture
def gauss():
    return DistributionSpec.gaussian(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
