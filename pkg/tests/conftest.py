import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    """Record one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        _LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
