import pytest

import brokergame as bg


@pytest.fixture(scope="session")
def params():
    return bg.DEFAULT_PARAMS


@pytest.fixture(scope="session")
def grid1000():
    return bg.TimeGrid(1.0, 1000)


@pytest.fixture(scope="session")
def grid200():
    return bg.TimeGrid(1.0, 200)


@pytest.fixture(scope="session")
def bundle(params, grid1000):
    """Default coefficient tables on the standard grid, solved once."""
    return bg.build_coefficients(params, grid1000)


@pytest.fixture(scope="session")
def bundle200(params, grid200):
    return bg.build_coefficients(params, grid200)
