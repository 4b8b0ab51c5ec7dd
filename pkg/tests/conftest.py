import sys
from pathlib import Path

import pytest

# make the oracle helpers importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


@pytest.fixture
def acceptance(request):
    """Record the one-line verdict of an acceptance criterion."""
    lines = request.config.stash[_LINES]

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
