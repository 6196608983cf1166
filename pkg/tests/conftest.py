import pytest

_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(key, title, ok, detail):
        _VERDICTS[key] = f"{'PASS' if ok else 'FAIL'}  criterion {key}: {title} | {detail}"
        assert ok, _VERDICTS[key]

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[key])
