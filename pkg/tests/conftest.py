import math
import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")

from kickpend import Params  # noqa: E402


@pytest.fixture
def params():
    return Params()


@pytest.fixture
def damped():
    return Params(k=0.03)


THETA_STAR = math.pi / 3


def pytest_terminal_summary(terminalreporter):
    from _report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
