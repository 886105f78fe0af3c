"""Run-wide reporting: one PASS/FAIL line per numbered acceptance check.

Acceptance tests are named test_cNN_<what>; this hook aggregates their
outcomes (a criterion backed by several tests shows FAIL if any of them
failed) and prints the verdict block after the usual pytest summary.
"""

from __future__ import annotations

import re

_PATTERN = re.compile(r"::test_c(\d{2})_")
_results: dict[int, str] = {}


def pytest_runtest_logreport(report):
    match = _PATTERN.search(report.nodeid)
    if match is None:
        return
    n = int(match.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if _results.get(n) == "failed":
            return
        _results[n] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus):
    if not _results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(_results):
        verdict = "PASS" if _results[n] == "passed" else "FAIL"
        terminalreporter.write_line(f"[criterion {n:02d}] {verdict}")
