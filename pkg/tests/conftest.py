import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

_REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT_KEY] = []


@pytest.fixture
def verdict(request):
    """Print and record one acceptance line, then assert it."""
    lines = request.config.stash[_REPORT_KEY]

    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print("\n" + line)
        lines.append(line)
        assert ok, detail

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash[_REPORT_KEY], key=lambda s: int(s.split()[2].rstrip(":")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
