import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = {}


class Verdicts:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, n, ok, detail):
        _LINES[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
