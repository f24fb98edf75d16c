import pytest


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record(request):
    """Store one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def _record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config._acceptance[number] = line
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter, config):
    lines = config._acceptance
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
