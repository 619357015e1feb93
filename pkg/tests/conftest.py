import numpy as np
import pytest

import crescent as c


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def cloud_2k():
    return c.generate_cloud("uniform-cube", 2048, seed=11)


@pytest.fixture(scope="session")
def tree_2k(cloud_2k):
    return c.build_kdtree(cloud_2k)


@pytest.fixture(scope="session")
def cloud_16k():
    return c.generate_cloud("uniform-cube", 16384, seed=3)


@pytest.fixture(scope="session")
def tree_16k(cloud_16k):
    return c.build_kdtree(cloud_16k)
