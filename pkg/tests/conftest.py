import pytest

_DETAIL = pytest.StashKey[list]()
_VERDICTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.fixture
def detail(request):
    """Append measured values to the test's acceptance line."""
    notes = request.node.stash.setdefault(_DETAIL, [])
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    notes = "; ".join(item.stash.get(_DETAIL, []))
    status = "PASS" if report.passed else "FAIL"
    _VERDICTS[number] = f"criterion {number} {status}: {title}" + (f" [{notes}]" if notes else "")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
