from __future__ import annotations

import numpy as np
import pytest

from nematic_sav.mesh import build_rect_mesh
from nematic_sav.state import Discretization, SimParams

UNIT = (0.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def disc4():
    return Discretization(build_rect_mesh(UNIT, 4, 4))


@pytest.fixture(scope="session")
def disc6():
    return Discretization(build_rect_mesh(UNIT, 6, 6))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rest_params(scheme="pcsav", **kw):
    base = dict(nu=0.1, lam=1.0, gamma=1.0, eps=0.05, dt=0.01, T=1.0, scheme=scheme)
    base.update(kw)
    return SimParams(**base)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    """Record one acceptance line; printed in the terminal summary."""
    ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
