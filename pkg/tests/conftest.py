import pytest


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion(request):
    """Print and remember one PASS/FAIL line for an acceptance criterion."""
    def _record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config._acceptance_lines.append(line)
    return _record

