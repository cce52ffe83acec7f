"""PCSAV-ECT: the PCSAV step with explicit, K-scaled convection.

The momentum operator ``(3/(2Δt)) M + ν K`` no longer depends on the
velocity, so it is assembled and factorized once per (mesh, Δt, ν) and
every later step costs only triangular solves.  The explicit convection ``(ũ·∇)ũ`` enters the breve
right-hand side and, through ``(1/λ)((ũ·∇)ũ, u_star)``, the scalar equation.
"""

from __future__ import annotations

import numpy as np

from .stepper_pcsav import _solve_free, advance, restrict_free, solve_K, velocity_history_rhs


def velocity_operator(disc, params):
    """Cached factorization of the constant momentum operator on interior dofs."""
    return disc.factor(("ect-velocity", params.dt, params.nu),
                       lambda: restrict_free(disc, (1.5 / params.dt) * disc.M + params.nu * disc.K))


def solve_velocity_star_parts_ect(state, params, ext, loads=None):
    disc = state.disc
    rhs = np.concatenate([velocity_history_rhs(state, params, loads),
                          params.lam * ext.stress - ext.convection])
    sol = _solve_free(disc, velocity_operator(disc, params).solve, rhs)
    return sol.reshape(2, 2, disc.n)


def solve_K_ect(state, parts, params, ext):
    """As :func:`solve_K`; ``ext.convection`` adds the two extra inner products."""
    return solve_K(state, parts, params, ext)


def step_ect(state, params):
    """One PCSAV-ECT step from levels (n-1, n) to n+1."""
    return advance(state, params, solve_velocity_star_parts_ect, explicit_convection=True)
