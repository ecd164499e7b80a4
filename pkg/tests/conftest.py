from __future__ import annotations

import pytest

_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdicts() -> list[str]:
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
