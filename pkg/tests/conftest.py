"""Shared pytest wiring.

Acceptance tests append one status line per criterion here; the terminal
summary hook prints them after the run so they are visible even when
output capture is on.
"""
from __future__ import annotations

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
