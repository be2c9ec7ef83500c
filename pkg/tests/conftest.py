import pytest

_LINES = []


class _Criterion:
    def __init__(self, reporter, name):
        self.reporter = reporter
        self.name = name
        self.done = False

    def record(self, passed, detail):
        self.done = True
        line = f"{'PASS' if passed else 'FAIL'} | {self.name} | {detail}"
        _LINES.append(line)
        if self.reporter is not None:
            self.reporter.write_line("")
            self.reporter.write_line(line)
        return passed


@pytest.fixture
def criterion(request):
    """Records one pass/fail line for an acceptance criterion."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    marker = request.node.get_closest_marker("criterion")
    crit = _Criterion(reporter, marker.args[0] if marker else request.node.name)
    yield crit
    if not crit.done:
        crit.record(False, "did not complete")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion label")


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
