import numpy as np
import pytest

from raddiff.mesh import gauss_quadrature
from raddiff.milne import MilneDiscretization, solve_nonlinear_milne

# standard benchmark: wall temperature 1, isotropic inflow 1.5
BENCH_T = 1.0
BENCH_PSI = 1.5


@pytest.fixture(scope="session")
def quad():
    return gauss_quadrature(8)


@pytest.fixture(scope="session")
def disc(quad):
    return MilneDiscretization(quad=quad)


@pytest.fixture(scope="session")
def bench_milne(disc):
    return solve_nonlinear_milne(BENCH_T, BENCH_PSI, disc=disc)


def pytest_configure(config):
    np.seterr(over="raise", invalid="raise", divide="raise")


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
