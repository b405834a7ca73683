import time

import pytest

from flatflow.flow import FlowConfig, run_flow
from flatflow.grid import GridSpec

_TRACES = {}
CRITERIA = {}


def cached_run(cfg: FlowConfig):
    """Run a flow once per session; returns ``(trace, seconds)``."""
    key = repr(cfg)
    if key not in _TRACES:
        tic = time.perf_counter()
        tr = run_flow(cfg)
        _TRACES[key] = (tr, time.perf_counter() - tic)
    return _TRACES[key]


def record_criterion(number, passed, detail):
    CRITERIA[number] = (bool(passed), detail)


@pytest.fixture(scope="session")
def grid256():
    return GridSpec.square(256)


@pytest.fixture(scope="session")
def grid128():
    return GridSpec.square(128)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        passed, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
