import pytest

ACCEPTANCE_COUNT = 9
_results: dict = {}


@pytest.fixture
def criterion():
    """record(n, ok, detail): outcome of one acceptance criterion."""
    def record(n, ok, detail=""):
        _results[n] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        ok, detail = _results.get(n, (False, "not run"))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
