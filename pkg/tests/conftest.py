"""Acceptance summary: one PASS/FAIL line per numbered criterion.

Tests marked ``@pytest.mark.acceptance(n, title)`` are grouped by ``n``; a
criterion passes when every one of its tests passes.  Tests may attach a
short ``detail`` user property that is echoed next to the verdict.
"""
import pytest

_criteria = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            item.user_properties.append(("acceptance", m.args))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "acceptance" not in props:
        return
    number, title = props["acceptance"]
    entry = _criteria.setdefault(number, {"title": title, "failed": [], "passed": 0,
                                          "details": []})
    if report.when == "call" or report.outcome != "passed":
        if report.outcome == "passed":
            if report.when == "call":
                entry["passed"] += 1
        else:
            entry["failed"].append(report.nodeid.split("::")[-1])
        if report.when == "call":
            for key, val in report.user_properties:
                if key == "detail":
                    entry["details"].append(val)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        verdict = "FAIL" if e["failed"] else "PASS"
        line = f"criterion {number}: {verdict}  {e['title']}"
        if e["failed"]:
            line += f"  (failed: {', '.join(e['failed'])})"
        tr.write_line(line)
        for d in e["details"]:
            tr.write_line(f"    {d}")


@pytest.fixture
def detail(record_property):
    """Attach a one-line note to the acceptance summary."""
    return lambda text: record_property("detail", text)
