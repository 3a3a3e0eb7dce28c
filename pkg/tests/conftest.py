import os
from collections import defaultdict

import pytest

_results = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _results[mark.args[0]].append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        parts = _results[n]
        failed = [name for name, o in parts if o != "passed"]
        status = "PASS" if not failed else "FAIL"
        detail = f" ({', '.join(failed)})" if failed else ""
        tr.write_line(f"criterion {n:>2}: {status}  [{len(parts) - len(failed)}/{len(parts)} checks]{detail}")


@pytest.fixture(autouse=True)
def _single_worker(monkeypatch):
    # keep sweeps serial unless the caller asked for workers explicitly
    if "PHONON_LATTICE_THREADS" not in os.environ:
        monkeypatch.setenv("PHONON_LATTICE_THREADS", "1")
