import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hardysolve.assembly import assemble
from hardysolve.geometry import DomainSpec, RegionK, build_grid, k_mask


@pytest.fixture(scope="session")
def ball_grid():
    return build_grid(DomainSpec.ball(1.0, 3), 50)


@pytest.fixture(scope="session")
def ball_ops(ball_grid):
    return assemble(ball_grid)


@pytest.fixture(scope="session")
def box_grid():
    return build_grid(DomainSpec.box([(-1, 1)] * 3), 8)


@pytest.fixture(scope="session")
def box_ops(box_grid):
    return assemble(box_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bump(grid, power=1.0):
    """Smooth test function vanishing at the boundary."""
    if grid.radial:
        return np.cos(0.5 * np.pi * grid.coords / grid.domain.radius) ** power
    out = np.ones(grid.size)
    for axis, (a, b) in enumerate(grid.domain.bounds):
        out *= np.sin(np.pi * (grid.coords[:, axis] - a) / (b - a))
    return out ** power


def whole_ball_mask(grid):
    return k_mask(grid, RegionK.annulus(0.0, grid.domain.radius))


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
