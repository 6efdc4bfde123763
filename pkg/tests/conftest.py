import math

import numpy as np
import pytest
from hypothesis import settings

from compdelivery.prob_core import DistortionMeasure, validate_joint

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def h2(p):
    """Binary entropy in nats."""
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def dsbs(p):
    return validate_joint([[(1 - p) / 2, p / 2], [p / 2, (1 - p) / 2]], (2, 2))


@pytest.fixture
def ham2():
    return DistortionMeasure.hamming(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
