import pytest

_REPORT = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(k, ok, detail)``."""
    def _add(k, ok, detail=""):
        line = f"CRITERION {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _REPORT.append((k, line))
        print(line)
        return ok
    return _add


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_REPORT, key=lambda item: item[0]):
        terminalreporter.write_line(line)
