"""Time loop shared by the command line drivers and the studies."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .energy import audit_energy_law, compute_energies
from .errors import ConfigError, InvariantViolation
from .firststep import start
from .stepper_ect import step_ect
from .stepper_pcsav import step

logger = logging.getLogger(__name__)

STEPPERS = {"pcsav": step, "pcsav-ect": step_ect}
AUDIT_FACTOR = 1e-6


def n_steps(t_final, dt):
    n = int(round(t_final / dt))
    if n < 1 or abs(n * dt - t_final) > 1e-9 * max(t_final, dt):
        raise ConfigError(f"t_final={t_final} is not a positive multiple of dt={dt}")
    return n


@dataclass
class RunResult:
    state: object
    records: list = field(default_factory=list)
    audit_failures: list = field(default_factory=list)
    seconds: float = 0.0


def simulate(disc, d0, u0, params, t_final, audit="warn", energy=True, on_step=None):
    """Run the first step and BDF2 steps up to ``t_final``.

    ``audit`` is ``"warn"``, ``"abort"`` or ``"off"``; the audit tolerance is
    ``1e-6 W*⁰``.  ``on_step(state)`` is called for every level, including 0.
    """
    if audit not in ("warn", "abort", "off"):
        raise ConfigError(f"audit policy must be warn, abort or off, got {audit!r}")
    stepper = STEPPERS[params.scheme]
    nsteps = n_steps(t_final, params.dt)
    t0 = time.perf_counter()
    state0, state = start(disc, d0, u0, params)
    result = RunResult(state)
    tol = None
    prev = None
    for st in (state0, state):
        prev = _record(st, params, prev, result, energy, audit, tol)
        if tol is None and prev is not None:
            tol = AUDIT_FACTOR * abs(prev.W_star)
        if on_step is not None:
            on_step(st)
    for _ in range(nsteps - 1):
        state = stepper(state, params)
        prev = _record(state, params, prev, result, energy, audit, tol)
        if on_step is not None:
            on_step(state)
    result.state = state
    result.seconds = time.perf_counter() - t0
    return result


def _record(state, params, prev, result, energy, audit, tol):
    if not energy:
        return None
    rec = compute_energies(state, params)
    if prev is not None:
        rec.residual, ok = audit_energy_law(prev, rec, tol)
        if not ok and audit != "off":
            msg = f"energy law violated at step {rec.step}: residual {rec.residual:.3e} > {tol:.3e}"
            result.audit_failures.append(rec.step)
            if audit == "abort":
                raise InvariantViolation(msg)
            logger.warning(msg)
    result.records.append(rec)
    return rec


def min_director_norm(state):
    """Smallest nodal ``|d|`` and the node where it occurs."""
    r = np.hypot(state.d[0], state.d[1])
    i = int(np.argmin(r))
    return float(r[i]), state.disc.V.node_coords[i]
