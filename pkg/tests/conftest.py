from pathlib import Path

import pytest

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

_ACCEPTANCE: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE.append(line)


@pytest.fixture
def configs() -> Path:
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
