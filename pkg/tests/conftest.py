import re

import pytest

N_CRITERIA = 12
_KEY = pytest.StashKey[dict]()
_CONFIG = []      # the active pytest config, for the report hook


class AcceptanceLog:
    def __init__(self, store: dict):
        self.store = store

    def record(self, number: int, ok: bool, detail: str) -> bool:
        self.store[number] = (bool(ok), detail)
        print(f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok


def pytest_configure(config):
    config.stash[_KEY] = {}
    _CONFIG[:] = [config]


@pytest.fixture(scope="session")
def acceptance(request):
    return AcceptanceLog(request.config.stash[_KEY])


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_(\d+)_", report.nodeid)
    if m and report.failed:
        store = _CONFIG[0].stash[_KEY]
        store.setdefault(int(m.group(1)), (False, f"errored during {report.when}"))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        if k in results:
            ok, detail = results[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d}: NOT RUN")
