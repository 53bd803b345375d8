import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def acceptance_log(request):
    """Record (criterion, passed, detail) for the end-of-run summary."""
    log = request.config.stash[_RESULTS]

    def record(criterion, passed, detail=""):
        log.append((criterion, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(results, key=lambda r: r[0]):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}"
        terminalreporter.write_line(line + (f"  {detail}" if detail else ""))
