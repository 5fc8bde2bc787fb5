"""Per-criterion pass/fail report for the acceptance suite.

Tests tagged ``@pytest.mark.criterion(k, "title")`` are grouped by k; the
terminal summary prints one line per criterion. A criterion passes when all
of its tests that ran passed; skipped parts are listed next to it.
"""

from collections import defaultdict

import pytest

_results: dict[int, dict] = defaultdict(lambda: {"title": "", "outcomes": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, title): acceptance criterion k")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        k, title = mark.args
        entry = _results[k]
        entry["title"] = entry["title"] or title
        entry["outcomes"].append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_results):
        entry = _results[k]
        ran = [o for _, o in entry["outcomes"] if o != "skipped"]
        skipped = [n for n, o in entry["outcomes"] if o == "skipped"]
        if not ran:
            status = "SKIP"
        else:
            status = "PASS" if all(o == "passed" for o in ran) else "FAIL"
        note = f"  (skipped: {', '.join(skipped)})" if skipped and ran else ""
        tr.write_line(f"criterion {k:2d} {status}  {entry['title']}{note}")
