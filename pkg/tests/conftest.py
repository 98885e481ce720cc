import warnings

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def _quiet_rate_warnings():
    from lpustat.ustat import RateConditionWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateConditionWarning)
        yield


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line for a numbered acceptance criterion and print it."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
