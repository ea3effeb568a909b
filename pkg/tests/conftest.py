import numpy as np
import pytest

from anisocrit.domain import Box, DomainSpec, build_grid
from anisocrit.problem import Problem

PI = float(np.pi)


def weighted_spec(k=1, grid=8, n=3):
    bounds = [[1.0, 2.0]] + [[0.0, 1.0]] * (n - 1)
    return DomainSpec(n=n, shape=Box(bounds), k=k, grid=grid)


def classical_spec(grid=8):
    return DomainSpec(n=3, shape=Box([[0.0, PI]] * 3), k=0, grid=grid)


@pytest.fixture(scope="session")
def weighted8():
    return Problem.weighted(weighted_spec(1, 8), modes=6)


@pytest.fixture(scope="session")
def grid8():
    return build_grid(weighted_spec(1, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
