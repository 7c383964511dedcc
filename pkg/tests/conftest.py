import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    marker = _CRITERIA.get(report.nodeid)
    if marker is None:
        return
    if report.failed or (report.when == "call" and report.skipped):
        marker["outcome"] = "FAIL" if report.failed else "SKIP"
    elif report.when == "call" and marker["outcome"] is None:
        marker["outcome"] = "PASS"


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = {"number": m.args[0], "title": m.args[1], "outcome": None}


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for entry in sorted(_CRITERIA.values(), key=lambda e: e["number"]):
        outcome = entry["outcome"] or "NOT RUN"
        terminalreporter.write_line(f"criterion {entry['number']:>2}: {outcome:<7} {entry['title']}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240611)
