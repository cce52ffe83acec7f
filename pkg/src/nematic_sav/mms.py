"""Manufactured-solution harness on the unit square.

Exact fields::

    a = (π/4)(1 - cos 2πx) + πt,   d = (cos a, sin a)
    u = (sin²πx sin2πy, -sin2πx sin²πy) sin t
    p = (xy - 1/4) cos πt

``|d| = 1`` so the penalty gradient vanishes and ``w = -Δd``.  The forcing
terms are closed-form; :func:`forcing_fd` rebuilds them by finite
differences and guards the derivation in the tests.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mesh import build_rect_mesh
from .problems import DEFAULTS, initial_fields
from .simulation import n_steps, simulate
from .state import Discretization, SimParams

logger = logging.getLogger(__name__)

PI = math.pi
DOMAIN = DEFAULTS["mms"]["domain"]
T_FINAL = 0.2


def _angle(t, x):
    a = 0.25 * PI * (1.0 - np.cos(2 * PI * x)) + PI * t
    ax = 0.5 * PI**2 * np.sin(2 * PI * x)
    axx = PI**3 * np.cos(2 * PI * x)
    return a, ax, axx


def exact_solution(t, x, y):
    """Exact ``(d, u, p)``; vector fields carry a leading axis of length 2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a, _, _ = _angle(t, x)
    d = np.stack([np.cos(a), np.sin(a)])
    st = math.sin(t)
    u = np.stack([np.sin(PI * x) ** 2 * np.sin(2 * PI * y) * st,
                  -np.sin(2 * PI * x) * np.sin(PI * y) ** 2 * st])
    p = (x * y - 0.25) * math.cos(PI * t) + 0.0 * y
    return d, u, p


def exact_gradients(t, x, y):
    """``(∇d, ∇u)`` with shape ``(2, ..., 2)``: ``g[a, ..., k] = ∂_k f_a``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a, ax, _ = _angle(t, x)
    zero = np.zeros(np.broadcast(x, y).shape)
    gd = np.stack([np.stack([-np.sin(a) * ax + zero, zero], axis=-1),
                   np.stack([np.cos(a) * ax + zero, zero], axis=-1)])
    S = math.sin(t)
    s2x, s2y = np.sin(2 * PI * x), np.sin(2 * PI * y)
    c2x, c2y = np.cos(2 * PI * x), np.cos(2 * PI * y)
    sx2, sy2 = np.sin(PI * x) ** 2, np.sin(PI * y) ** 2
    gu = np.stack([
        np.stack([PI * s2x * s2y * S, 2 * PI * sx2 * c2y * S], axis=-1),
        np.stack([-2 * PI * c2x * sy2 * S, -PI * s2x * s2y * S], axis=-1),
    ])
    return gd, gu


def forcing(t, x, y, params=None):
    """``(F_d, F_u)`` making the exact fields solve the forced system.

    ``F_d = d_t + u·∇d + γ(-Δd)`` and
    ``F_u = u_t + (u·∇)u - νΔu + ∇p - λ(∇d)ᵀ(-Δd)``.
    """
    p = params or _default_params()
    nu, lam, gam = p["nu"], p["lam"], p["gamma"]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a, ax, axx = _angle(t, x)
    d, u, _ = exact_solution(t, x, y)
    n = np.stack([-np.sin(a), np.cos(a)])
    # d_t = π n,  ∇d = n ⊗ (a_x, 0),  -Δd = -a_xx n + a_x² d
    F_d = (PI + u[0] * ax - gam * axx) * n + gam * ax**2 * d

    S, C = math.sin(t), math.cos(t)
    s2x, s2y = np.sin(2 * PI * x), np.sin(2 * PI * y)
    c2x, c2y = np.cos(2 * PI * x), np.cos(2 * PI * y)
    sx2, sy2 = np.sin(PI * x) ** 2, np.sin(PI * y) ** 2
    ut = np.stack([sx2 * s2y * C, -s2x * sy2 * C])
    _, gu = exact_gradients(t, x, y)
    conv = np.einsum("k...,a...k->a...", u, gu)
    lap = np.stack([(2 * PI**2 * c2x * s2y - 4 * PI**2 * sx2 * s2y) * S,
                    (4 * PI**2 * s2x * sy2 - 2 * PI**2 * s2x * c2y) * S])
    cp = math.cos(PI * t)
    gp = np.stack([y * cp, x * cp])
    # -λ(∇d)ᵀw with w = -Δd: (∇d)ᵀw = a_x (n·w) e_x = -a_x a_xx e_x
    stress = np.stack([lam * ax * axx, np.zeros_like(ax + y)])
    F_u = ut + conv - nu * lap + gp + stress
    return F_d, F_u


def _default_params():
    p = DEFAULTS["mms"]
    return dict(nu=p["nu"], lam=p["lam"], gamma=p["gamma"])


def forcing_fd(t, x, y, params=None, h=1e-3):
    """Fourth-order central-difference evaluation of the forcing (oracle)."""
    p = params or _default_params()
    nu, lam, gam = p["nu"], p["lam"], p["gamma"]

    def D(f, var):
        def shifted(s):
            if var == "t":
                return f(t + s, x, y)
            if var == "x":
                return f(t, x + s, y)
            return f(t, x, y + s)
        return (-shifted(2 * h) + 8 * shifted(h) - 8 * shifted(-h) + shifted(-2 * h)) / (12 * h)

    def D2(f, var):
        def shifted(s):
            return f(t, x + s, y) if var == "x" else f(t, x, y + s)
        return (-shifted(2 * h) + 16 * shifted(h) - 30 * shifted(0.0) + 16 * shifted(-h)
                - shifted(-2 * h)) / (12 * h * h)

    dfun = lambda t_, x_, y_: exact_solution(t_, x_, y_)[0]
    ufun = lambda t_, x_, y_: exact_solution(t_, x_, y_)[1]
    pfun = lambda t_, x_, y_: exact_solution(t_, x_, y_)[2]
    d, u, _ = exact_solution(t, x, y)
    dx, dy = D(dfun, "x"), D(dfun, "y")
    lap_d = D2(dfun, "x") + D2(dfun, "y")
    w = -lap_d
    F_d = D(dfun, "t") + u[0] * dx + u[1] * dy + gam * w
    ux, uy = D(ufun, "x"), D(ufun, "y")
    lap_u = D2(ufun, "x") + D2(ufun, "y")
    gradp = np.stack([D(pfun, "x"), D(pfun, "y")])
    stress = np.stack([np.sum(dx * w, axis=0), np.sum(dy * w, axis=0)])
    F_u = D(ufun, "t") + u[0] * ux + u[1] * uy - nu * lap_u + gradp - lam * stress
    return F_d, F_u


def mms_params(dt, scheme="pcsav", **overrides):
    p = DEFAULTS["mms"]
    kw = dict(nu=p["nu"], lam=p["lam"], gamma=p["gamma"], eps=p["eps"], T=p["T"], dt=dt, scheme=scheme)
    kw.update(overrides)
    coeffs = dict(nu=kw["nu"], lam=kw["lam"], gamma=kw["gamma"])
    kw["forcing"] = lambda t, x, y: forcing(t, x, y, coeffs)
    return SimParams(**kw)


@dataclass
class ErrorNorms:
    d_L2: float
    d_H1: float
    u_L2: float
    u_H1: float
    p_L2: float


def error_norms(state, t=None):
    """L² and H¹-seminorm errors of ``d``, ``u`` and the L² error of ``p``.

    The velocity error uses the corrected field ``u_star - ∇psi``; pressures
    are compared after removing their means.
    """
    disc = state.disc
    t = state.t if t is None else t
    x, y = disc.xq[..., 0], disc.xq[..., 1]
    d_ex, u_ex, p_ex = exact_solution(t, x, y)
    gd_ex, gu_ex = exact_gradients(t, x, y)
    ed = disc.values(state.d) - d_ex
    egd = disc.grads(state.d) - gd_ex
    eu = state.velocity_qp() - u_ex
    egu = disc.grads(state.u) - gu_ex
    ph = disc.p1_values(state.p)
    ep = (ph - disc.integrate(ph) / disc.area) - (p_ex - disc.integrate(p_ex) / disc.area)
    return ErrorNorms(
        d_L2=math.sqrt(disc.integrate(np.sum(ed**2, axis=0))),
        d_H1=math.sqrt(disc.integrate(np.sum(egd**2, axis=(0, -1)))),
        u_L2=math.sqrt(disc.integrate(np.sum(eu**2, axis=0))),
        u_H1=math.sqrt(disc.integrate(np.sum(egu**2, axis=(0, -1)))),
        p_L2=math.sqrt(disc.integrate(ep**2)),
    )


def run_mms(n_cells, dt, scheme="pcsav", t_final=T_FINAL, energy=False):
    """One manufactured-solution run; returns ``(state, records)``."""
    disc = Discretization(build_rect_mesh(DOMAIN, n_cells, n_cells))
    params = mms_params(dt, scheme)
    d0, u0 = initial_fields("mms", disc)
    res = simulate(disc, d0, u0, params, t_final, audit="off", energy=energy)
    return res.state, res.records


def rates(errors):
    e = np.asarray(errors, dtype=float)
    return np.concatenate([[np.nan], np.log2(e[:-1] / e[1:])])


@dataclass
class StudyTable:
    mode: str
    columns: list
    rows: list

    def rates_of(self, key):
        i = self.columns.index(key)
        return [r[i] for r in self.rows]

    def write_csv(self, path):
        from .cli import atomic_write

        def body(f):
            w = csv.writer(f)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow(r)
        atomic_write(path, body)


def convergence_study(mode, scheme="pcsav", levels=4, n_cells=64, dt0=0.05, h0_cells=20, dt=1e-3,
                      t_final=T_FINAL):
    """Temporal (Δt halved from ``dt0`` on an ``n_cells`` mesh) or spatial
    (cells doubled from ``h0_cells`` at fixed ``dt``) convergence table."""
    if levels < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    if mode not in ("temporal", "spatial"):
        raise ConfigError(f"mode must be temporal or spatial, got {mode!r}")
    errs, meta = [], []
    for lev in range(levels):
        if mode == "temporal":
            nc, step = n_cells, dt0 / 2**lev
        else:
            nc, step = h0_cells * 2**lev, dt
        n_steps(t_final, step)
        t0 = time.perf_counter()
        state, _ = run_mms(nc, step, scheme, t_final)
        e = error_norms(state, t_final)
        logger.info("%s level %d (cells=%d, dt=%g): %s [%.1fs]", mode, lev, nc, step, e,
                    time.perf_counter() - t0)
        errs.append(e)
        meta.append((lev, step, 1.0 / nc))
    if mode == "temporal":
        keys = [("d", "d_L2"), ("u", "u_L2"), ("p", "p_L2")]
        columns = ["level", "dt", "h", "err_d_L2", "rate_d", "err_u_L2", "rate_u", "err_p_L2", "rate_p"]
    else:
        keys = [("grad_d", "d_H1"), ("grad_u", "u_H1"), ("p", "p_L2")]
        columns = ["level", "dt", "h", "err_grad_d", "rate_grad_d", "err_grad_u", "rate_grad_u",
                   "err_p_L2", "rate_p"]
    cols = []
    for _name, attr in keys:
        vals = [getattr(e, attr) for e in errs]
        cols.append((vals, rates(vals)))
    rows = []
    for i, (lev, step, h) in enumerate(meta):
        row = [lev, step, h]
        for vals, r in cols:
            row += [vals[i], r[i]]
        rows.append(row)
    return StudyTable(mode, columns, rows)


def sav_error(records, T):
    """``max_n |sⁿ - exp(-tⁿ/T)|`` over a list of energy records."""
    return max(abs(r.s - math.exp(-r.t / T)) for r in records)
