"""Energy functionals and the audit of the discrete dissipation law."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

CSV_COLUMNS = ("step", "t", "W_kin", "W_ela", "W_pen", "W", "W_s", "W_tilde", "W_star",
               "s", "K", "A", "D", "residual")


@dataclass
class EnergyRecord:
    step: int
    t: float
    W_kin: float
    W_ela: float
    W_pen: float
    W: float
    W_s: float
    W_tilde: float
    W_star: float
    s: float
    K: float
    A: float
    D: float
    residual: float = float("nan")

    def as_row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]

    def as_dict(self):
        return asdict(self)


def _q_norm2(disc, q):
    return disc.integrate(q * q)


def penalty_energy(disc, d, lam, eps):
    """``λ ∫ (|d|² - 1)² / (4ε²)``."""
    r2 = np.sum(disc.values(d) ** 2, axis=0)
    return lam * disc.integrate((r2 - 1.0) ** 2) / (4.0 * eps**2)


def curl_norm2(disc, u):
    """``||∂x u₂ - ∂y u₁||²`` of a P2 velocity."""
    gu = disc.grads(u)
    c = gu[1, ..., 0] - gu[0, ..., 1]
    return disc.integrate(c * c)


def star_energy(state, params):
    """Three-level energy ``W*`` of the BDF2 energy law at level ``n``."""
    disc = state.disc
    lam, eps, dt, nu = params.lam, params.eps, params.dt, params.nu
    u_ext = 2.0 * state.u - state.u_prev
    psi_ext = 2.0 * state.psi - state.psi_prev
    d_ext = 2.0 * state.d - state.d_prev
    q_ext = 2.0 * state.q - state.q_prev
    s_ext = 2.0 * state.s - state.s_prev
    return (0.5 * disc.velocity_norm2(state.u, state.psi)
            + 0.5 * disc.velocity_norm2(u_ext, psi_ext)
            + (2.0 / 3.0) * dt**2 * float(state.H @ (disc.K1 @ state.H))
            + dt / nu * float(state.g @ (disc.M1 @ state.g))
            + 0.5 * lam * (disc.vsemi2(state.d) + disc.vsemi2(d_ext))
            + 0.25 * lam * eps**2 * (_q_norm2(disc, state.q) + _q_norm2(disc, q_ext))
            + 0.5 * lam * (state.s**2 + s_ext**2))


def dissipation(state, params):
    """Dissipation ``D`` released by the step that produced ``state``.

    For BDF2 levels: ``2Δtλγ||w||² + νΔt||∇u*||² + νΔt||∇×u*||² + (2Δt/T)λ s²``.
    For the first-order start-up level only ``νΔt||∇u¹||²`` is counted.
    """
    disc = state.disc
    dt = params.dt
    if state.n == 0:
        return 0.0
    if state.n == 1:
        return params.nu * dt * disc.vsemi2(state.u)
    return (2.0 * dt * params.lam * params.gamma * disc.vnorm2(state.w)
            + params.nu * dt * disc.vsemi2(state.u)
            + params.nu * dt * curl_norm2(disc, state.u)
            + 2.0 * dt / params.T * params.lam * state.s**2)


def compute_energies(state, params):
    """Energy record of ``state``; ``residual`` is filled by :func:`audit_energy_law`."""
    disc = state.disc
    lam, eps = params.lam, params.eps
    W_kin = 0.5 * disc.velocity_norm2(state.u, state.psi)
    W_ela = 0.5 * lam * disc.vsemi2(state.d)
    W_pen = penalty_energy(disc, state.d, lam, eps)
    W_q = 0.25 * lam * eps**2 * _q_norm2(disc, state.q)
    return EnergyRecord(
        step=state.n, t=state.t, W_kin=W_kin, W_ela=W_ela, W_pen=W_pen,
        W=W_kin + W_ela + W_pen, W_s=W_kin + W_ela,
        W_tilde=W_kin + W_ela + W_q + 0.5 * state.s**2,
        W_star=star_energy(state, params), s=state.s, K=state.K, A=state.A,
        D=dissipation(state, params),
    )


def audit_energy_law(prev, nxt, tol):
    """Residual of the discrete energy law between consecutive records.

    BDF2 levels use ``(W*_{n+1} - W*_n) + D_{n+1}``; the start-up level uses
    the first-order law ``(W_1 - W_0) + D_1``.  Returns ``(residual, ok)``.
    """
    if nxt.step == 1:
        residual = (nxt.W - prev.W) + nxt.D
    else:
        residual = (nxt.W_star - prev.W_star) + nxt.D
    return residual, bool(residual <= tol)


def record_fields():
    return [f.name for f in fields(EnergyRecord)]


def is_monotone(values, tol=0.0):
    """True when ``values`` never increase by more than ``tol``."""
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= tol)) and all(math.isfinite(x) for x in v)
