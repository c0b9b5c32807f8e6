import numpy as np
import pytest

from tenshop.config import default_params
from tenshop.geometry import assemble_lattice, build_unit_cell
from tenshop.model import discretize


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def unit_cell():
    return build_unit_cell(1.0)


@pytest.fixture(scope="session")
def lattice_2x2(unit_cell):
    return assemble_lattice(unit_cell, 2, 2)


@pytest.fixture(scope="session")
def system_1x1(unit_cell, params):
    return discretize(assemble_lattice(unit_cell, 1, 1), params)


@pytest.fixture(scope="session")
def system_2x2(lattice_2x2, params):
    return discretize(lattice_2x2, params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
