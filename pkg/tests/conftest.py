import numpy as np
import pytest

from cmvlab.coefficients import catalog
from cmvlab.grid import catalog_densities, uniform_grid


@pytest.fixture(scope="session")
def grid101():
    x = uniform_grid(-6.0, 6.0, 101)
    return x, x


@pytest.fixture(scope="session")
def densities(grid101):
    return catalog_densities(*grid101)


@pytest.fixture(scope="session")
def indep():
    return catalog("independence")


@pytest.fixture(scope="session")
def general():
    return catalog("general")


def normal_pdf(x):
    return np.exp(-0.5 * np.asarray(x) ** 2) / np.sqrt(2 * np.pi)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
