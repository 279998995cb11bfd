import pytest

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def _report(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[ACCEPTANCE].append((criterion, line))
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
