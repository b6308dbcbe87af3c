"""Shared test utilities: acceptance-criteria pass/fail reporting.

Acceptance tests record one line per criterion; the lines are echoed in the
terminal summary so the full scorecard is visible in any pytest run.
"""

ACCEPTANCE_LINES = []


def record_acceptance(number, description, passed):
    """Record and print one acceptance-criterion verdict; returns ``passed``."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {description}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
