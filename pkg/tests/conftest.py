from pathlib import Path

import numpy as np
import pytest

from pcelqr import CostSpec, LtiSystem, solve_finite, stationary_gains, uniform_disturbance
from pcelqr.infinite import stationary_pair
from pcelqr.scenario_io import load_scenario

ROOT = Path(__file__).resolve().parents[1]
CSTR_PATH = ROOT / "scenarios" / "cstr.json"

ACCEPTANCE_LINES = []


def random_stable_system(rng, n_x=3, max_u=2, max_w=2):
    """Random ``(sys, cost, dist)`` with a uniform disturbance; open loop may be unstable."""
    A = rng.normal(size=(n_x, n_x))
    A *= rng.uniform(0.5, 1.5) / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    n_u = int(rng.integers(1, max_u + 1))
    n_w = int(rng.integers(1, max_w + 1))
    sys = LtiSystem(A, rng.normal(size=(n_x, n_u)), rng.normal(size=(n_x, n_w)))
    cost = CostSpec(np.eye(n_x), np.eye(n_u))
    low = rng.uniform(-1.0, 0.0, n_w)
    dist = uniform_disturbance(low, low + rng.uniform(0.1, 1.0, n_w))
    return sys, cost, dist


@pytest.fixture(scope="session")
def cstr():
    return load_scenario(CSTR_PATH)


@pytest.fixture(scope="session")
def cstr_gains(cstr):
    return stationary_gains(cstr.sys, cstr.cost)


@pytest.fixture(scope="session")
def cstr_rep(cstr, cstr_gains):
    return stationary_pair(cstr.sys, cstr.cost, cstr.dist, gains=cstr_gains)


@pytest.fixture(scope="session")
def cstr_sol(cstr):
    return solve_finite(cstr)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
