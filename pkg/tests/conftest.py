from __future__ import annotations

import re

import numpy as np
import pytest
from hypothesis import settings

from sdcluster.bootstrap import BootstrapConfig
from sdcluster.market_data import panel_from_arrays

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

_ACCEPTANCE = re.compile(r"test_c(\d\d)_(\w+)")
_results: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    match = _ACCEPTANCE.search(report.nodeid)
    if not match or "test_acceptance.py" not in report.nodeid:
        return
    key, name = match.groups()
    if report.failed:
        _results[key] = ("FAIL", name)
    elif report.skipped:
        _results.setdefault(key, ("SKIP", name))
    elif report.when == "call" and key not in _results:
        _results[key] = ("PASS", name)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results):
        outcome, name = _results[key]
        terminalreporter.write_line(f"criterion {int(key):2d}  {outcome}  {name}")


@pytest.fixture
def fast_cfg() -> BootstrapConfig:
    return BootstrapConfig(reps=200, seed=12345)


@pytest.fixture
def small_panel():
    rng = np.random.default_rng(2024)
    base = rng.normal(0.0, 0.02, size=(60, 1))
    returns = np.hstack([base, base + rng.normal(0, 0.001, (60, 1)), rng.normal(0.05, 0.02, (60, 2))])
    return panel_from_arrays(returns, ["AAA", "BBB", "CCC", "DDD"])
