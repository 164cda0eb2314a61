import pytest

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or "criterion" not in marker.kwargs:
        return
    entry = _criteria.setdefault(marker.kwargs["criterion"],
                                 {"title": marker.kwargs.get("title", ""), "ok": True})
    if report.failed or (report.when == "call" and report.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        entry = _criteria[num]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {entry['title']}")
