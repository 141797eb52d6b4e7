"""Collects acceptance results and prints one PASS/FAIL line per criterion."""
from __future__ import annotations

import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def record(request):
    """``record(n, part, ok, detail)`` stores the outcome of one check of criterion ``n``."""
    store = request.config.stash[_RESULTS]

    def _record(n: int, part: str, ok: bool, detail: str = "") -> bool:
        store.setdefault(n, []).append((part, bool(ok), detail))
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_RESULTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        parts = store[n]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}")
        for part, ok, detail in parts:
            terminalreporter.write_line(f"    [{'ok' if ok else 'FAILED'}] {part}: {detail}")
