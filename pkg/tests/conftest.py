import pytest


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record(request):
    """record(n, title, ok, detail) stores one acceptance line per criterion."""
    def _record(n, title, ok, detail=""):
        request.config._acceptance[n] = (title, ok, detail)
        print(f"criterion {n} ({title}): {'PASS' if ok else 'FAIL'} {detail}")
    return _record


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n} ({title}): {'PASS' if ok else 'FAIL'}  {detail}")
