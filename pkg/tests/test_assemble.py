from __future__ import annotations

from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nematic_sav import assemble as asm
from nematic_sav.errors import ConfigError
from nematic_sav.mesh import build_rect_mesh
from nematic_sav.space import build_dofmap, interpolate

UNIT = (0.0, 1.0, 0.0, 1.0)


def ref_monomial(a, b):
    """Exact ``∫ x^a y^b`` over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def quad_ref(rule, f):
    x, y = rule.points[:, 1], rule.points[:, 2]
    return float(np.sum(rule.weights * f(x, y)))


@pytest.fixture(scope="module")
def mesh():
    return build_rect_mesh((0.0, 1.0, 0.0, 1.0), 4, 4)


@pytest.fixture(scope="module")
def V(mesh):
    return build_dofmap(mesh, "P2")


@pytest.fixture(scope="module")
def Q(mesh):
    return build_dofmap(mesh, "P1")


def bubble_field(V, rng):
    """Random vector P2 coefficients vanishing on the boundary."""
    v = rng.standard_normal((2, V.n_scalar))
    v[:, V.boundary] = 0.0
    return v


# ----------------------------------------------------------------- quadrature

@pytest.mark.parametrize("degree", [2, 4, 6, 8])
def test_rule_invariants(degree):
    r = asm.quad_rule(degree)
    assert np.all(r.weights > 0)
    assert r.weights.sum() == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(r.points.sum(axis=1), 1.0)
    assert np.all(r.points >= 0)


@pytest.mark.parametrize("degree", [2, 4, 6, 8])
def test_reference_analytic_values(degree):
    r = asm.quad_rule(degree)
    assert quad_ref(r, lambda x, y: 1.0 + 0 * x) == pytest.approx(0.5, abs=1e-15)
    assert quad_ref(r, lambda x, y: x * y) == pytest.approx(1 / 24, abs=1e-15)


def test_x4_with_degree_four():
    assert abs(quad_ref(asm.quad_rule(4), lambda x, y: x**4) - 1 / 30) < 1e-14


@pytest.mark.parametrize("degree", [2, 4, 6, 8])
def test_exact_for_all_monomials(degree):
    r = asm.quad_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = quad_ref(r, lambda x, y: x**a * y**b)
            assert got == pytest.approx(ref_monomial(a, b), rel=1e-12, abs=1e-15)


def test_unsupported_degree():
    with pytest.raises(ConfigError):
        asm.quad_rule(5)


# --------------------------------------------------------------------- matrices

def test_p1_element_mass_matches_analytic():
    m = build_rect_mesh((0.0, 2.0, 0.0, 3.0), 1, 1)
    Q = build_dofmap(m, "P1")
    ed = asm.element_data(Q)
    elem = asm.weighted_mass_elements(Q, np.ones_like(ed.wdet))
    ref = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 12.0
    for e, A in zip(elem, m.signed_areas()):
        assert np.allclose(e, A * ref, atol=1e-15)


def test_p1_mass_row_sums_total_area(Q):
    M = asm.mass_matrix(Q)
    assert M.sum() == pytest.approx(1.0, abs=1e-14)


def test_mass_symmetric_positive_definite(V, rng):
    M = asm.mass_matrix(V)
    assert abs(M - M.T).max() < 1e-16
    for x in rng.standard_normal((100, V.n_scalar)):
        assert x @ (M @ x) > 0


def test_stiffness_kernel_and_linear_energy(V):
    K = asm.stiffness_matrix(V)
    assert np.max(np.abs(K.sum(axis=1))) < 1e-12
    x = V.node_coords[:, 0]
    assert x @ (K @ x) == pytest.approx(1.0, abs=1e-12)


def test_stiffness_quadratic_energy(V):
    K = asm.stiffness_matrix(V)
    c = interpolate(lambda x, y: x**2 + y**2, V).coef
    assert c @ (K @ c) == pytest.approx(8.0 / 3.0, abs=1e-12)


def test_convection_zero_velocity(V):
    C = asm.convection_matrix(V, np.zeros((2, V.n_scalar)))
    assert C.count_nonzero() == 0 or abs(C).max() == 0


def test_skew_convection_annihilates_bubbles(V, rng):
    for _ in range(5):
        ut = rng.standard_normal((2, V.n_scalar))
        C = asm.convection_matrix(V, ut, skew=True)
        v = bubble_field(V, rng)[0]
        scale = np.abs(v) @ (abs(C) @ np.abs(v))
        assert abs(v @ (C @ v)) <= 1e-11 * max(scale, 1.0)


def test_skew_identity_with_boundary_flux(V, rng):
    # ∫(ũ·∇v)v + ½(∇·ũ)v² = ½∮(ũ·n)v²; with ũ = (x, 0) and v = 1 the flux is ½
    ut = np.stack([V.node_coords[:, 0], np.zeros(V.n_scalar)])
    C = asm.convection_matrix(V, ut, skew=True)
    one = np.ones(V.n_scalar)
    assert one @ (C @ one) == pytest.approx(0.5, abs=1e-12)


def test_convection_of_x_gives_area(V):
    ut = np.stack([np.ones(V.n_scalar), np.zeros(V.n_scalar)])
    C = asm.convection_matrix(V, ut, skew=True)
    x = V.node_coords[:, 0]
    assert np.ones(V.n_scalar) @ (C @ x) == pytest.approx(1.0, abs=1e-12)


def test_reaction_zero_and_unit_director(V):
    n = V.n_scalar
    R0 = asm.director_reaction_operator(V, np.zeros((2, n)), 2.5)
    assert abs(R0).max() == 0
    R = asm.director_reaction_operator(V, np.stack([np.ones(n), np.zeros(n)]), 2.5).toarray()
    M = asm.mass_matrix(V).toarray()
    assert np.allclose(R[:n, :n], 2.5 * M, atol=1e-14)
    assert np.allclose(R[n:, :], 0.0) and np.allclose(R[:, n:], 0.0)


def test_reaction_quadratic_form_oracle(V, rng):
    dt = rng.standard_normal((2, V.n_scalar))
    R = asm.director_reaction_operator(V, dt, 0.7, degree=8)
    d_qp = asm.values_at_qp(V, dt, 8)
    for _ in range(50):
        v = rng.standard_normal((2, V.n_scalar))
        v_qp = asm.values_at_qp(V, v, 8)
        oracle = 0.7 * asm.integrate(V, np.sum(d_qp * v_qp, axis=0) ** 2, 8)
        got = v.ravel() @ (R @ v.ravel())
        assert got >= 0
        assert got == pytest.approx(oracle, rel=1e-11)


def test_elastic_rhs_cases(V):
    n = V.n_scalar
    x = V.node_coords[:, 0]
    const = np.stack([np.full(n, 0.6), np.full(n, 0.8)])
    w = np.stack([np.ones(n), np.zeros(n)])
    assert np.allclose(asm.elastic_rhs(V, const, w, 1.0), 0.0, atol=1e-14)
    assert np.allclose(asm.elastic_rhs(V, np.stack([x, x]), np.zeros((2, n)), 1.0), 0.0)
    b = asm.elastic_rhs(V, np.stack([x, np.zeros(n)]), w, 1.0)
    rows = np.asarray(asm.mass_matrix(V).sum(axis=1)).ravel()
    assert np.allclose(b[0], rows, atol=1e-14)
    assert np.allclose(b[1], 0.0, atol=1e-14)


def test_gradient_and_divergence_trivial_cases(V, Q):
    assert np.allclose(asm.pressure_gradient_rhs(V, np.full(Q.n_scalar, 3.0), Q), 0.0, atol=1e-13)
    assert np.all(asm.divergence_functional(Q, np.zeros((2, V.n_scalar)), V) == 0.0)


def test_divergence_theorem_identity(V, Q, rng):
    for _ in range(10):
        u = bubble_field(V, rng)
        p = rng.standard_normal(Q.n_scalar)
        lhs = np.sum(asm.pressure_gradient_rhs(V, p, Q) * u) + p @ asm.divergence_functional(Q, u, V)
        assert abs(lhs) < 1e-11


def test_gradient_matrix_is_divergence_transpose_up_to_sign(V, Q):
    # (∇ψ_j, φ_i) = -(ψ_j, ∂φ_i) only on interior test functions
    G = asm.gradient_matrices(V, Q)
    D = asm.divergence_matrices(Q, V)
    f = np.flatnonzero(~V.boundary)
    for k in range(2):
        assert abs(G[k][f] + D[k].T.tocsr()[f]).max() < 1e-13


def test_assembly_is_deterministic(mesh, rng):
    V1 = build_dofmap(mesh, "P2")
    ut = rng.standard_normal((2, V1.n_scalar))
    A = asm.convection_matrix(V1, ut)
    B = asm.convection_matrix(V1, ut)
    assert np.array_equal(A.data, B.data) and np.array_equal(A.indices, B.indices)


@settings(max_examples=20, deadline=None)
@given(nx=st.integers(1, 6), ny=st.integers(1, 6), w=st.floats(0.2, 3.0), h=st.floats(0.2, 3.0))
def test_p2_mass_total_equals_area(nx, ny, w, h):
    V = build_dofmap(build_rect_mesh((0.0, w, 0.0, h), nx, ny), "P2")
    M = asm.mass_matrix(V)
    assert M.sum() == pytest.approx(w * h, rel=1e-12)
    assert abs(asm.stiffness_matrix(V).sum()) < 1e-10 * max(1.0, nx * ny)
