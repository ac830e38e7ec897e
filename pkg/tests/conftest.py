import pytest

CRITERION_LINES = []


@pytest.fixture
def criterion():
    """Record a one-line pass/fail verdict for an acceptance criterion."""
    def _record(num, name, ok):
        line = f"criterion {num:2d} ({name}): {'PASS' if ok else 'FAIL'}"
        CRITERION_LINES.append(line)
        assert ok, line
    return _record


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)
