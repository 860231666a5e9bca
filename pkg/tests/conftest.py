"""
Shared fixtures for the mcflow test suite.
"""
import numpy as np
import pytest

from mcflow.geometry import make_base, make_evolving


@pytest.fixture
def circle():
    return make_base("circle", 1, 1.0, 128)


@pytest.fixture
def small_circle():
    return make_base("circle", 1, 1.0, 32)


@pytest.fixture
def line():
    return make_base("periodic_line", 1, 2.0 * np.pi, 128)


@pytest.fixture
def plane():
    return make_base("periodic_plane", 2, 2.0 * np.pi, 32)


@pytest.fixture
def sphere():
    return make_base("sphere", 2, 1.0, 32)


@pytest.fixture
def shrinking_circle(circle):
    return make_evolving(circle, 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
