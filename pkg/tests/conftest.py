"""Shared pytest hooks.

Acceptance tests register one line per criterion in ``ACCEPTANCE_LINES``; the
lines are printed in the terminal summary so they survive output capture.
"""

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
