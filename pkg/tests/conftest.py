"""Shared test hooks: a one-line verdict per acceptance criterion.

The acceptance tests are named ``test_criterion_NN_*``; after a run that
included any of them, the terminal summary lists each criterion with its
outcome so the gate can be read without scanning the full pytest output.
"""

import re

_CRITERION_PATTERN = re.compile(r"test_criterion_(\d+)_([a-z0-9_]+)")

_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION_PATTERN.search(report.nodeid)
    if m is None:
        return
    num = int(m.group(1))
    name = m.group(2).replace("_", " ")
    if report.when == "call":
        _results[num] = (name, report.outcome)
    elif report.when == "setup" and report.outcome != "passed":
        # fixture error or skip: the call phase never happens
        _results[num] = (name, report.outcome if report.skipped else "error")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        name, outcome = _results[num]
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(
            outcome, outcome.upper()
        )
        terminalreporter.write_line(f"criterion {num:2d}  {name:<52s} {verdict}")
