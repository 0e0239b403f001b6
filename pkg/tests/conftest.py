import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_RESULTS: dict[str, tuple[str, str]] = {}


@pytest.fixture
def record_criterion():
    """Record a one-line acceptance outcome, printed in the terminal summary."""

    def record(key: str, ok: bool, detail: str):
        ACCEPTANCE_RESULTS[key] = ("PASS" if ok else "FAIL", detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        status, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{status}  criterion {key}: {detail}")
