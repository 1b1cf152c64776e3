import numpy as np
import pytest

# acceptance verdict lines, filled by tests/test_acceptance.py
VERDICTS: dict[str, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_runtest_logreport(report):
    # a criterion that crashed before printing its verdict still gets a line
    if "test_acceptance" in report.nodeid and report.failed and report.nodeid not in VERDICTS:
        VERDICTS[report.nodeid] = f"FAIL {report.nodeid.split('::')[-1]}: {report.when} error"


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for nodeid in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[nodeid])
