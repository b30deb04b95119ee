"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    outcome.get_result().acceptance_labels = [m.args[0] for m in item.iter_markers("acceptance")]


def pytest_runtest_logreport(report):
    for label in getattr(report, "acceptance_labels", ()):
        if report.failed:
            _outcomes[label] = "FAIL"
        elif report.when == "call":
            _outcomes.setdefault(label, "SKIP" if report.skipped else "PASS")
        elif report.skipped:
            _outcomes.setdefault(label, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_outcomes, key=lambda s: int(s[2:])):
        terminalreporter.write_line(f"{label}: {_outcomes[label]}")
