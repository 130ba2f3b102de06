import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from quadgrad.grid import Grid, Interval, Rectangle
from quadgrad.problem import constant_problem

settings.register_profile("quadgrad", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("quadgrad")

PI2 = math.pi ** 2

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_grid():
    return Grid(Interval(1.0), 127)


@pytest.fixture
def square_grid():
    return Grid(Rectangle(1.0, 1.0), 15)


@pytest.fixture
def problem_factory():
    return constant_problem


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[name])
