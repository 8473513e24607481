from __future__ import annotations

import numpy as np
import pytest

from gwdiscovery.offspring import deterministic, parse_offspring

_CRITERIA_LINES: list[str] = []


@pytest.fixture
def det2():
    return deterministic(2)


@pytest.fixture
def unif13():
    return parse_offspring("1:0.5,3:0.5")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record():
    """Print one pass/fail line per acceptance criterion and keep it for the summary."""

    def _record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _CRITERIA_LINES.append(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA_LINES:
            terminalreporter.write_line(line)
