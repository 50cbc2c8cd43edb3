"""Shared fixtures: cached scenario runs and the acceptance summary table."""
from __future__ import annotations

import functools
import time

import pytest

from regplan.sim.runner import run_scenario
from regplan.sim.scenarios import get_scenario

# criterion number -> (label, passed, detail)
_CRITERIA: dict[int, tuple[str, bool, str]] = {}


def record_criterion(num: int, label: str, passed: bool, detail: str = "") -> None:
    _CRITERIA[num] = (label, passed, detail)


def criterion(num: int, label: str):
    """Record pass/fail for one acceptance criterion, even on mid-test errors.

    The wrapped test may return a short detail string for the summary table.
    """
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                record_criterion(num, label, False, str(exc).splitlines()[0][:160])
                raise
            record_criterion(num, label, True,
                             detail if isinstance(detail, str) else "")
        return wrapper
    return decorate


class RunBank:
    """Session-wide cache of closed-loop scenario runs keyed by (name, variant)."""

    def __init__(self) -> None:
        self._cache: dict[tuple[str, str], tuple[object, float]] = {}

    def get(self, name: str, variant: str = "base"):
        key = (name, variant)
        if key not in self._cache:
            cfg = get_scenario(name, variant)
            start = time.perf_counter()
            result = run_scenario(cfg)
            wall = time.perf_counter() - start
            self._cache[key] = (result, wall)
        return self._cache[key]

    def result(self, name: str, variant: str = "base"):
        return self.get(name, variant)[0]

    def wall_seconds(self, name: str, variant: str = "base") -> float:
        return self.get(name, variant)[1]


@pytest.fixture(scope="session")
def run_bank() -> RunBank:
    return RunBank()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        label, passed, detail = _CRITERIA[num]
        verdict = "PASS" if passed else "FAIL"
        line = f"[{verdict}] criterion {num:2d}: {label}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)
