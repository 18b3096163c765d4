import numpy as np
import pytest

from wkcc.geometry import Grid, make_distribution, make_reference, uniform_distribution


def random_quantiles(rng, grid, atoms=False):
    """Monotone quantile values inside Omega, optionally with flat stretches."""
    inc = rng.gamma(0.5, size=grid.m + 1)
    if atoms:
        inc[rng.random(grid.m + 1) < 0.3] = 0.0
    inc[-1] += 1e-3
    cum = np.cumsum(inc)
    q = grid.omega_lo + grid.width * cum[:-1] / cum[-1]
    return q


def random_distribution(rng, grid, atoms=False):
    return make_distribution(grid, random_quantiles(rng, grid, atoms))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid():
    return Grid(1000, 0.0, 1.0)


@pytest.fixture
def uniform_ref(grid):
    return make_reference(uniform_distribution(grid))


def round_trip_error(a, b, grid):
    """Largest deviation in units of the rounding error of ``(q - x) + x``."""
    return float(np.abs(np.asarray(a) - np.asarray(b)).max() / (np.finfo(float).eps * max(1.0, abs(grid.omega_lo), abs(grid.omega_hi))))


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
