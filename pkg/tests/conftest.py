import numpy as np
import pytest

from brwplab.density import GridDensity, uniform_axis
from brwplab.potentials import make_gaussian_mixture, make_quadratic, make_zero


@pytest.fixture
def axis_default():
    return uniform_axis(-12.0, 12.0, 2401)


@pytest.fixture
def quad1d():
    return make_quadratic(1.0, 1)


@pytest.fixture
def mix1d():
    return make_gaussian_mixture(2.0, 1.0, dim=1)


@pytest.fixture
def zero1d():
    return make_zero(1)


def gaussian_grid(axis, mean=0.0, var=1.0):
    vals = np.exp(-(axis - mean) ** 2 / (2.0 * var))
    return GridDensity((axis,), vals).normalize()


@pytest.fixture
def gaussian_grid_factory():
    return gaussian_grid
