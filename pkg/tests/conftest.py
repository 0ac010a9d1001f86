from pathlib import Path

import pytest

PROGRAMS = Path(__file__).resolve().parent.parent / "programs"


@pytest.fixture
def programs() -> Path:
    return PROGRAMS


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
