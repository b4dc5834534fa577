"""Shared test plumbing: the acceptance suite's per-criterion summary."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_CRITERION_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Collect one acceptance-criterion verdict for the terminal summary."""
    status = "PASS" if passed else "FAIL"
    _CRITERION_LINES[number] = f"criterion {number:02d}: {status} - {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[number])
