import numpy as np
import pytest

from zomd import FeasibleSet, Geometry

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail):
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} :: {detail}")


@pytest.fixture
def record():
    """Callable ``record(number, title, passed, detail)`` for acceptance verdicts."""
    return record_acceptance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def box5():
    return Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=5))


@pytest.fixture
def simplex3():
    return Geometry("negative_entropy", FeasibleSet.simplex(3), norm="l1")
