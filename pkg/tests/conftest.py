import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.fixture
def detail(request):
    """Record a one-line summary that is printed next to the criterion's verdict."""
    def note(text):
        request.node.user_properties.append(("detail", text))
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        notes = [v for k, v in item.user_properties if k == "detail"]
        _criteria[n] = (rep.outcome, "; ".join(notes))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outcome, note = _criteria[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {note}".rstrip())
