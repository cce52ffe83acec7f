from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import rest_params
from hypothesis import given, settings
from hypothesis import strategies as st

from nematic_sav.energy import (CSV_COLUMNS, EnergyRecord, audit_energy_law, compute_energies, is_monotone,
                                penalty_energy, record_fields)
from nematic_sav.firststep import initial_state
from nematic_sav.mesh import build_rect_mesh
from nematic_sav.problems import initial_fields
from nematic_sav.simulation import simulate
from nematic_sav.state import Discretization


def record(**kw):
    base = dict(step=3, t=0.3, W_kin=0.0, W_ela=1.0, W_pen=0.0, W=1.0, W_s=1.0, W_tilde=1.5, W_star=2.0,
                s=1.0, K=1.0, A=1.0, D=0.0)
    base.update(kw)
    return EnergyRecord(**base)


def test_rest_state_energies(disc4):
    d0 = np.stack([np.full(disc4.n, 0.6), np.full(disc4.n, 0.8)])
    params = rest_params()
    e = compute_energies(initial_state(disc4, d0, np.zeros((2, disc4.n)), params), params)
    assert e.W_kin == 0.0
    assert e.W_pen == pytest.approx(0.0, abs=1e-24)
    assert e.W_tilde == pytest.approx(e.W_ela + 0.5, abs=1e-14)


def test_smooth_example_elastic_energy_oracle():
    # ∫|∇d⁰|² = 4π² ∫(sin²x + cos²y) = 16π² on [-1, 1]², so W_ela = 8π² for λ = 1
    disc = Discretization(build_rect_mesh((-1.0, 1.0, -1.0, 1.0), 20, 20))
    d0, u0 = initial_fields("smooth", disc)
    params = rest_params(lam=1.0)
    e = compute_energies(initial_state(disc, d0, u0, params), params)
    assert e.W_ela == pytest.approx(8 * math.pi**2, rel=1e-3)
    assert e.W_kin == 0.0


def test_smooth_example_penalty_energy_is_interpolation_error():
    # |d⁰| = 1 at the nodes only; the penalty of the P2 interpolant vanishes as h → 0
    vals = []
    for n in (10, 20):
        disc = Discretization(build_rect_mesh((-1.0, 1.0, -1.0, 1.0), n, n))
        d0, _ = initial_fields("smooth", disc)
        vals.append(penalty_energy(disc, d0, 1.0, 0.05))
    assert vals[1] < 1e-3 and vals[0] / vals[1] > 50


def test_audit_identical_records():
    r = record()
    res, ok = audit_energy_law(r, replace(r, step=4), 1e-12)
    assert res == 0.0 and ok


def test_audit_detects_energy_increase():
    r = record()
    res, ok = audit_energy_law(r, replace(r, step=4, W_star=r.W_star + 1.0), 1e-6)
    assert res == pytest.approx(1.0) and not ok


def test_audit_first_order_level_uses_plain_energy():
    r0 = record(step=0, W=2.0)
    r1 = record(step=1, W=1.5, D=0.25)
    res, ok = audit_energy_law(r0, r1, 0.0)
    assert res == pytest.approx(-0.25) and ok


def test_record_columns():
    assert list(CSV_COLUMNS) == record_fields()
    assert len(record().as_row()) == len(CSV_COLUMNS)


def test_is_monotone():
    assert is_monotone([3.0, 2.0, 2.0, 1.0])
    assert not is_monotone([1.0, 1.1])
    assert is_monotone([1.0, 1.0 + 1e-12], tol=1e-10)
    assert not is_monotone([1.0, float("nan")])


@pytest.mark.parametrize("scheme", ["pcsav", "pcsav-ect"])
def test_smooth_example_energy_law_and_monotone_modified_energy(scheme):
    disc = Discretization(build_rect_mesh((-1.0, 1.0, -1.0, 1.0), 8, 8))
    d0, u0 = initial_fields("smooth", disc)
    params = rest_params(scheme, dt=0.01, T=0.1)
    res = simulate(disc, d0, u0, params, 0.1, audit="abort")
    assert not res.audit_failures
    tol = 1e-6 * res.records[0].W_star
    assert all(r.residual <= tol for r in res.records[1:])
    assert is_monotone([r.W_tilde for r in res.records])
    for r in res.records:
        assert r.W_s <= r.W + 1e-14
        assert r.W_pen >= 0 and r.W_tilde >= 0 and r.W_kin >= 0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.01, 3.0))
def test_energy_components_nonnegative(seed, scale):
    disc = Discretization(build_rect_mesh((0.0, 1.0, 0.0, 1.0), 3, 3))
    rng = np.random.default_rng(seed)
    d = scale * rng.standard_normal((2, disc.n))
    u = rng.standard_normal((2, disc.n))
    u[:, disc.V.boundary] = 0.0
    params = rest_params()
    e = compute_energies(initial_state(disc, d, u, params), params)
    assert e.W_kin >= 0 and e.W_ela >= 0 and e.W_pen >= 0 and e.W_tilde >= 0
    assert e.W_s <= e.W
