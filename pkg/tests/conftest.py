import numpy as np
import pytest

from nsvlasov.fields import Grid2D, VectorField
from nsvlasov.kinetic import VelocityGrid


@pytest.fixture
def grid():
    return Grid2D(24, 20, 1.0, 0.8)


@pytest.fixture
def square():
    return Grid2D(32, 32)


@pytest.fixture
def vgrid():
    return VelocityGrid(12, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_vector(grid, rng, walls=True):
    u = VectorField(grid, rng.standard_normal((grid.nx + 1, grid.ny)), rng.standard_normal((grid.nx, grid.ny + 1)))
    return u.with_walls() if walls else u


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append((number, line))
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
