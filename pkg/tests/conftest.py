"""Shared pytest configuration.

Prints one PASS/FAIL line per acceptance criterion at the end of a run that
includes tests from test_acceptance.py.
"""

import re

_acceptance_results = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = re.search(r"test_acceptance\.py::.*test_criterion_(\d+)", report.nodeid)
    if match:
        number = int(match.group(1))
        _acceptance_results[number] = (report.outcome, report.nodeid, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_acceptance_results):
        outcome, nodeid, duration = _acceptance_results[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(
            f"ACCEPTANCE {number:>2} {status}  ({duration:6.2f}s)  {name}")
