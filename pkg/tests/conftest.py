import pytest

_LINES = []


@pytest.fixture
def criterion_report(capsys):
    """``report(n, ok, detail)`` prints one PASS/FAIL line past output capture."""

    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        _LINES.append((n, line))
        with capsys.disabled():
            print("\n" + line)
        return line

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
