import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion(request):
    """Register an acceptance criterion; marked PASS only if the test body finishes."""
    holder = {}

    def register(label):
        holder["label"] = label
        _CRITERIA[label] = "FAIL"

    yield register
    if "label" in holder and request.node.rep_call_passed:
        _CRITERIA[holder["label"]] = "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call_passed = rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA, key=lambda s: int(s.split(".")[0])):
        terminalreporter.write_line(f"[{_CRITERIA[label]}] {label}")
