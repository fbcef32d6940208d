import pytest

_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(n, ok, detail):
        _LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
