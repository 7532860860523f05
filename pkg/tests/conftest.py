import numpy as np
import pytest

from zabs.estimation import FitOptions, fit
from zabs.io import bundled_biaxial
from zabs.model import ModelSpec, exp_ratio, linear
from zabs.links import IDENTITY
from zabs.model import Component
from zabs.synthetic import SIMPLE


def fd_gradient(f, x, h=None):
    """Central differences with step eps^(1/3) * (|x| + 1)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        step = (np.finfo(float).eps ** (1 / 3) if h is None else h) * (abs(x[k]) + 1)
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        g[k] = (f(xp) - f(xm)) / (2 * step)
    return g


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        step = h * (abs(x[k]) + 1)
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * step))
    return np.column_stack(cols)


@pytest.fixture(scope="session")
def biaxial():
    return bundled_biaxial()


@pytest.fixture(scope="session")
def biaxial_model():
    return ModelSpec(Component(IDENTITY, exp_ratio("w")), Component(IDENTITY, linear()), None)


@pytest.fixture(scope="session")
def biaxial_fit(biaxial, biaxial_model):
    return fit(biaxial_model, biaxial, FitOptions(covariance="observed"))


@pytest.fixture(scope="session")
def simple_data():
    return SIMPLE.simulate(400, np.random.default_rng(7))


@pytest.fixture(scope="session")
def simple_fit(simple_data):
    return fit(SIMPLE.model, simple_data)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
