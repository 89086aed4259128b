import numpy as np
import pytest

from ballbasis import build_dyadic, build_grid


@pytest.fixture(scope="session")
def dyadic3():
    return build_dyadic(3)


@pytest.fixture(scope="session")
def dyadic4():
    return build_dyadic(4)


@pytest.fixture(scope="session")
def dyadic6():
    return build_dyadic(6)


@pytest.fixture(scope="session")
def dyadic8():
    return build_dyadic(8)


@pytest.fixture(scope="session")
def dyadic10():
    return build_dyadic(10)


@pytest.fixture(scope="session")
def grid8():
    return build_grid(8)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16)


@pytest.fixture(scope="session")
def grid64():
    return build_grid(64)


@pytest.fixture(scope="session")
def grid128():
    return build_grid(128)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
