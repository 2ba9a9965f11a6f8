import warnings

import numpy as np
import pytest

from nsdi.grid import make_grid
from nsdi.groundstate import relax_imaginary_time
from nsdi.potentials import SoftCoreParams


@pytest.fixture(scope="session")
def small_ground():
    """Relaxed ground state on a coarse 64x64 grid (fast; not converged in dx)."""
    grid = make_grid(64, 0.5)
    psi, energy = relax_imaginary_time(grid, SoftCoreParams(), dt_im=0.05, tol=1e-12)
    return psi, energy


@pytest.fixture(scope="session")
def medium_ground():
    """128x128 grid with spacing 0.5 (L/2 = 32 a.u.)."""
    grid = make_grid(128, 0.5)
    psi, energy = relax_imaginary_time(grid, SoftCoreParams(), dt_im=0.05, tol=1e-12)
    return psi, energy


@pytest.fixture(scope="session")
def desk_grid_ground():
    """Ground state on a 192 x 0.8 grid: L/2 = 76.8 a.u., enough for CLI validation."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        grid = make_grid(192, 0.8)
    psi, energy = relax_imaginary_time(grid, SoftCoreParams(), dt_im=0.05, tol=1e-11)
    return psi, energy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance report ---------------------------------------------------------

_CRITERIA: dict = {}


class CriterionReport:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def __init__(self, capsys):
        self._capsys = capsys

    def __call__(self, number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        with self._capsys.disabled():
            print("\n" + line, flush=True)
        return passed


@pytest.fixture
def criterion(capsys):
    return CriterionReport(capsys)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
