import numpy as np
import pytest

THETA = np.array([2 / 3, 4 / 7, 5 / 9, 1 / 2, 4 / 5])
RATE = np.array([15.0, 70.0, 90.0, 40.0, 100.0])
LAMBDA_MAX = 50


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Print and remember one acceptance verdict line."""
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
