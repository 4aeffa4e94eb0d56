import pytest

from hrnn.numerics import make_rng
from helpers import random_params


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def params():
    return random_params()


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one acceptance-criterion outcome: ``acceptance(number, title, passed, detail)``."""

    def record(number, title, passed, detail=""):
        line = f"ACCEPTANCE {number} {title}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
        ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
