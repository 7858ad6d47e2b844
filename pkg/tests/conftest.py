import numpy as np
import pytest

from bcpingarch import process

ACCEPTANCE_RESULTS = {}


def record_criterion(number, ok, detail):
    """Store and echo one acceptance line; the summary hook re-prints them."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def series_a():
    s, lam = process.simulate(process.config_a(), 500, seed=2024)
    return s, lam


@pytest.fixture(scope="session")
def series_se():
    s, lam = process.simulate(process.se_setting(), 500, seed=77)
    return s, lam
