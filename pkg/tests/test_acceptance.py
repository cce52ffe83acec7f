"""Acceptance criteria at desk scale.

Slow (roughly half an hour on one core); select with ``-m acceptance`` or
skip with ``-m "not acceptance"``.  Each criterion adds one PASS/FAIL line
to the terminal summary.
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from conftest import report

from nematic_sav.cli import RunConfig, cauchy_study, cpu_compare
from nematic_sav.energy import is_monotone
from nematic_sav.mms import convergence_study, error_norms, rates, run_mms, sav_error
from nematic_sav.problems import initial_fields
from nematic_sav.simulation import simulate

pytestmark = pytest.mark.acceptance

SCHEMES = ("pcsav", "pcsav-ect")
TEMPORAL_DTS = (0.05, 0.025, 0.0125, 0.00625)
_temporal = {}


def in_window(x, lo, hi):
    return bool(lo <= x <= hi)


def temporal_runs(scheme):
    """MMS runs at h = 1/64 for the four time steps; shared by criteria 1 and 5."""
    if scheme not in _temporal:
        runs = []
        for dt in TEMPORAL_DTS:
            t0 = time.perf_counter()
            state, records = run_mms(64, dt, scheme, energy=True)
            runs.append(dict(dt=dt, errors=error_norms(state), records=records,
                             seconds=time.perf_counter() - t0))
        _temporal[scheme] = runs
    return _temporal[scheme]


@pytest.mark.parametrize("scheme", SCHEMES)
def test_criterion_1_temporal_order(scheme):
    t0 = time.perf_counter()
    runs = temporal_runs(scheme)
    minutes = (time.perf_counter() - t0) / 60
    final = {k: rates([getattr(r["errors"], f"{k}_L2") for r in runs])[-1] for k in "dup"}
    ok = (in_window(final["d"], 1.7, 2.3) and in_window(final["u"], 1.7, 2.3)
          and in_window(final["p"], 1.5, 2.3))
    report(1, ok, f"[{scheme}] final temporal rates d={final['d']:.3f} u={final['u']:.3f} "
                  f"p={final['p']:.3f} ({minutes:.1f} min)")
    assert ok


@pytest.mark.parametrize("scheme", SCHEMES)
def test_criterion_2_spatial_order(scheme):
    t0 = time.perf_counter()
    table = convergence_study("spatial", scheme, levels=3, h0_cells=20, dt=1e-3)
    minutes = (time.perf_counter() - t0) / 60
    gd, gu, p = (table.rates_of(k)[1:] for k in ("rate_grad_d", "rate_grad_u", "rate_p"))
    ok = (all(in_window(r, 1.8, 2.5) for r in gd + gu) and all(in_window(r, 1.8, 2.2) for r in p))
    report(2, ok, f"[{scheme}] spatial rates grad_d={np.round(gd, 3).tolist()} "
                  f"grad_u={np.round(gu, 3).tolist()} p={np.round(p, 3).tolist()} ({minutes:.1f} min)")
    assert ok


@pytest.mark.parametrize("scheme", SCHEMES)
def test_criterion_3_cauchy_rates(scheme):
    rows = cauchy_study(levels=3, scheme=scheme)
    gd, gu, p = ([row[i] for row in rows[1:]] for i in (4, 6, 8))
    ok = (all(in_window(r, 1.8, 2.3) for r in gd) and all(in_window(r, 1.6, 2.6) for r in gu)
          and all(in_window(r, 1.5, 2.2) for r in p))
    report(3, ok, f"[{scheme}] Cauchy rates grad_d={np.round(gd, 3).tolist()} "
                  f"grad_u={np.round(gu, 3).tolist()} p={np.round(p, 3).tolist()}")
    assert ok


@pytest.mark.parametrize("scheme", SCHEMES)
def test_criterion_4_energy_stability(scheme):
    lines, ok = [], True
    for dt in (0.01, 0.0025):
        for eps in (0.2, 0.1, 0.05):
            cfg = RunConfig(example="smooth", scheme=scheme, physics={"epsilon": eps},
                            time={"dt": dt, "t_final": 0.2}, mesh={"nx": 20}, audit="off")
            disc = cfg.discretization()
            d0, u0 = initial_fields("smooth", disc)
            res = simulate(disc, d0, u0, cfg.params(), 0.2, audit="off")
            tol = 1e-6 * res.records[0].W_star
            worst = max(r.residual for r in res.records[1:])
            mono = is_monotone([r.W_tilde for r in res.records])
            ok &= worst <= tol and mono
            lines.append(f"dt={dt} eps={eps}: max residual {worst:.2e} (tol {tol:.2e}) monotone={mono}")
    report(4, ok, f"[{scheme}] " + "; ".join(lines))
    assert ok


@pytest.mark.parametrize("scheme", SCHEMES)
def test_criterion_5_sav_consistency(scheme):
    runs = temporal_runs(scheme)
    errs = [sav_error(r["records"], 0.2) for r in runs]
    factors = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    min_A = min(rec.A for r in runs for rec in r["records"][2:])
    ok = in_window(factors[-1], 3.0, 5.0) and min_A > 0
    report(5, ok, f"[{scheme}] max|s-exp(-t/T)| = {['%.2e' % e for e in errs]}, "
                  f"halving factors {np.round(factors, 2).tolist()}, min A = {min_A:.3e}")
    assert ok


def test_criterion_6_defect_dynamics():
    scheme = "pcsav-ect"
    cfg = RunConfig(example="defects", scheme=scheme, time={"dt": 0.001, "t_final": 0.5},
                    mesh={"nx": 64}, audit="warn")
    disc = cfg.discretization()
    d0, u0 = initial_fields("defects", disc)
    X = disc.V.node_coords
    h = disc.mesh.h
    seen = {}

    def on_step(state):
        if state.n in (10, 500):
            seen[state.n] = np.hypot(*state.d)

    res = simulate(disc, d0, u0, cfg.params(), 0.5, audit="warn", on_step=on_step)
    r = seen[10]
    early_ok, where = True, []
    for side, centre in ((X[:, 0] < 0, (-0.5, 0.0)), (X[:, 0] >= 0, (0.5, 0.0))):
        i = np.flatnonzero(side)[np.argmin(r[side])]
        dist = math.hypot(X[i, 0] - centre[0], X[i, 1] - centre[1])
        early_ok &= dist <= h and r[i] < 0.1
        where.append(f"({X[i, 0]:+.3f},{X[i, 1]:+.3f}) |d|={r[i]:.3f}")
    late = float(seen[500].min())
    ok = early_ok and late >= 0.8 and not res.audit_failures
    report(6, ok, f"[{scheme}] t=0.01 minima {', '.join(where)} (h={h:.4f}); t=0.5 min|d|={late:.4f}; "
                  f"audit failures={len(res.audit_failures)} ({res.seconds / 60:.1f} min)")
    assert ok


def test_criterion_7_efficiency():
    cfg = RunConfig(example="smooth", time={"dt": 0.001, "t_final": 0.1}, mesh={"nx": 32}, audit="off")
    rep = cpu_compare(cfg)
    ok = rep["ratio"] <= 0.85 and rep["records"]["pcsav"] == rep["records"]["pcsav-ect"]
    report(7, ok, f"ECT/PCSAV wall-clock {rep['pcsav-ect_seconds']:.1f}s/{rep['pcsav_seconds']:.1f}s = "
                  f"{rep['ratio']:.3f}; final W_tilde rel diff {rep['W_tilde_rel_diff']:.2e}")
    assert ok


def test_criterion_8_oracle_suite():
    here = os.path.dirname(os.path.abspath(__file__))
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-m", "not acceptance", "-p", "no:cacheprovider",
                           here], capture_output=True, text=True)
    seconds = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0 and seconds < 60
    report(8, ok, f"unit/oracle/property suite: {tail} (wall {seconds:.1f}s)")
    assert ok, proc.stdout[-3000:]
