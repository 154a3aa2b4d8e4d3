"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

_criteria: dict[str, tuple[int, str]] = {}
_outcomes: dict[int, str] = {}

def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _criteria[item.nodeid] = (mark.kwargs["criterion"], mark.kwargs["title"])

def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    number, _ = _criteria[report.nodeid]
    if report.failed:
        _outcomes[number] = "FAIL"
    elif report.when == "call" and report.passed:
        _outcomes.setdefault(number, "PASS")
    elif report.skipped:
        _outcomes.setdefault(number, "SKIP")

def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    titles = {n: t for n, t in _criteria.values()}
    terminalreporter.section("acceptance criteria")
    for number in sorted(titles):
        status = _outcomes.get(number, "NOT RUN")
        terminalreporter.write_line(f"criterion {number}: {status:7s} {titles[number]}")
