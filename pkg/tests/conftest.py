import numpy as np
import pytest

from smoothpaths.grid import Grid1D
from smoothpaths.hamiltonian import free, harmonic
from smoothpaths.states import gaussian

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def grid():
    """Standard grid: 1024 points on [-16, 16), dx = 1/32."""
    return Grid1D(1024, -16.0, 16.0)


@pytest.fixture(scope="session")
def small_grid():
    return Grid1D(256, -16.0, 16.0)


@pytest.fixture
def free_ham():
    return free()


@pytest.fixture
def osc():
    return harmonic(1.0)


@pytest.fixture
def stationary(grid):
    return gaussian(grid, 0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class _Recorder:
    def record(self, number, label, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip()
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok


@pytest.fixture
def acceptance():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
