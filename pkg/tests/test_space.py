from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nematic_sav.errors import ConfigError
from nematic_sav.mesh import build_rect_mesh
from nematic_sav.problems import defect_director
from nematic_sav.space import Field, build_dofmap, evaluate, evaluate_points, interpolate, shape_functions

UNIT = (0.0, 1.0, 0.0, 1.0)


def test_p2_dof_count_single_cell():
    dm = build_dofmap(build_rect_mesh(UNIT, 1, 1), "P2")
    assert dm.n_scalar == 4 + 5


def test_p2_and_p1_dof_counts_two_by_two():
    m = build_rect_mesh(UNIT, 2, 2)
    assert build_dofmap(m, "P2").n_scalar == 25
    assert build_dofmap(m, "P1").n_scalar == 9
    assert build_dofmap(m, "P2", 2).size == 50


def test_p2_nodes_form_refined_grid():
    m = build_rect_mesh(UNIT, 3, 2)
    dm = build_dofmap(m, "P2")
    grid = {(round(2 * 3 * x), round(2 * 2 * y)) for x, y in dm.node_coords}
    # vertices plus side and diagonal midpoints fill the half-spacing grid
    assert len(grid) == dm.n_scalar == (2 * 3 + 1) * (2 * 2 + 1)


def test_invalid_kind_and_components():
    m = build_rect_mesh(UNIT, 1, 1)
    with pytest.raises(ConfigError):
        build_dofmap(m, "P3")
    with pytest.raises(ConfigError):
        build_dofmap(m, "P2", 3)
    with pytest.raises(ConfigError):
        Field(build_dofmap(m, "P2"), np.zeros(3))


def test_shape_functions_partition_of_unity():
    bary = np.random.default_rng(0).dirichlet([1, 1, 1], 20)
    for kind in ("P1", "P2"):
        vals, grads = shape_functions(kind, bary)
        assert np.allclose(vals.sum(axis=1), 1.0)
        assert np.allclose(grads.sum(axis=1), 0.0)


def test_interpolate_zero_and_linear():
    dm = build_dofmap(build_rect_mesh(UNIT, 3, 3), "P2")
    assert np.all(interpolate(lambda x, y: 0.0 * x, dm).coef == 0)
    f = interpolate(lambda x, y: x, dm)
    assert np.array_equal(f.coef, dm.node_coords[:, 0])


def test_defect_director_vanishes_at_defect():
    d = defect_director(np.array([0.5, -0.5]), np.array([0.0, 0.0]))
    assert np.allclose(d, 0.0, atol=1e-15)


def test_constant_field_evaluation():
    dm = build_dofmap(build_rect_mesh(UNIT, 2, 2), "P2", 2)
    f = interpolate(lambda x, y: np.stack([0 * x + 3.0, 0 * x - 1.0]), dm)
    val, grad = evaluate(f, 3, np.array([0.2, 0.3, 0.5]))
    assert np.allclose(val, [3.0, -1.0])
    assert np.allclose(grad, 0.0)


def test_quadratic_gradient_exact():
    dm = build_dofmap(build_rect_mesh(UNIT, 3, 3), "P2")
    f = interpolate(lambda x, y: x**2, dm)
    pts = np.random.default_rng(1).random((30, 2))
    _, g = evaluate_points(dm, f.coef, pts)
    assert np.allclose(g[:, 0], 2 * pts[:, 0], atol=1e-12)
    assert np.allclose(g[:, 1], 0.0, atol=1e-12)


def test_cubic_gradient_error_is_second_order():
    pts = np.random.default_rng(2).random((400, 2))
    errs = []
    for n in (4, 8, 16):
        dm = build_dofmap(build_rect_mesh(UNIT, n, n), "P2")
        _, g = evaluate_points(dm, interpolate(lambda x, y: x**3, dm).coef, pts)
        errs.append(np.max(np.abs(g[:, 0] - 3 * pts[:, 0] ** 2)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


@settings(max_examples=20, deadline=None)
@given(c=st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_p2_reproduces_quadratics(c):
    dm = build_dofmap(build_rect_mesh((-1.0, 2.0, 0.0, 1.5), 3, 2), "P2")

    def q(x, y):
        return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y

    f = interpolate(q, dm)
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(-1, 2, 100), rng.uniform(0, 1.5, 100)])
    v, g = evaluate_points(dm, f.coef, pts)
    x, y = pts.T
    assert np.allclose(v, q(x, y), atol=1e-11)
    assert np.allclose(g[:, 0], c[1] + 2 * c[3] * x + c[4] * y, atol=1e-10)
    assert np.allclose(g[:, 1], c[2] + c[4] * x + 2 * c[5] * y, atol=1e-10)
