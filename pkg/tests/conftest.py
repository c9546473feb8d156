import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from damctl.presets import reference_problem  # noqa: E402
from damctl.state import solve_state  # noqa: E402


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; returns ``ok`` so the test can assert on it."""

    def record(number, title, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail} | {elapsed:.2f}s (limit {limit:g}s)"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])


@pytest.fixture(scope="session")
def ref8():
    """Reference desk problem (8x8, M=20) with its forward trajectory."""
    P = reference_problem(8, 20)
    return P, solve_state(P)


@pytest.fixture(scope="session")
def ref4():
    P = reference_problem(4, 10)
    return P, solve_state(P)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def manufactured_run():
    from damctl.optimize import OptimizeConfig, optimize
    from damctl.presets import manufactured_problem

    P, b_star = manufactured_problem()
    b, hist = optimize(P, OptimizeConfig(max_iters=50, vi_rtol=1e-3))
    return P, b_star, b, hist
