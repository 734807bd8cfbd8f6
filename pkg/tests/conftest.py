"""Shared pytest plumbing.

The acceptance tests record one verdict line per criterion; they are echoed
in a dedicated section at the end of the run so the gate can be read off
without scrolling through the full log.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
