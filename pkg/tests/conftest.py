import pytest

_ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one PASS/FAIL line for an acceptance criterion."""
    def _record(number, title, ok, detail):
        _ACCEPTANCE[number] = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
