from __future__ import annotations

import pytest

# criterion number -> {"title", "statuses", "notes"}
_ACCEPTANCE: dict = {}


def _entry(marker):
    n, title = marker.args
    return _ACCEPTANCE.setdefault(n, {"title": title, "statuses": [], "notes": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.fixture
def acceptance_note(request):
    """Attach a measurement to the current criterion's summary line."""
    marker = request.node.get_closest_marker("criterion")

    def note(text):
        if marker is not None:
            _entry(marker)["notes"].append(text)

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    entry = _entry(marker)
    if rep.skipped:
        entry["statuses"].append("SKIP")
        if isinstance(rep.longrepr, tuple):
            entry["notes"].append(rep.longrepr[2].removeprefix("Skipped: "))
    else:
        entry["statuses"].append("PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        st = e["statuses"]
        status = "FAIL" if "FAIL" in st else "PASS" if "PASS" in st else "SKIP"
        line = f"[{status}] criterion {n:>2}: {e['title']}"
        if e["notes"]:
            line += " | " + "; ".join(e["notes"])
        terminalreporter.write_line(line)
