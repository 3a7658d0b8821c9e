import math

import pytest

from conestokes.geometry import ConeSpec
from conestokes.neumann import neumann_spectrum

ACCEPTANCE = []


@pytest.fixture(scope="session")
def hemisphere():
    cone = ConeSpec(math.pi / 2)
    return cone, neumann_spectrum(cone, 3.5)


@pytest.fixture(scope="session")
def cone60():
    cone = ConeSpec(math.pi / 3)
    return cone, neumann_spectrum(cone, 3.5)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
