"""Quadrature and vectorized global assembly of the finite-element forms.

Every routine evaluates its integrand at the quadrature points of all
triangles at once, builds the element matrices as a dense ``(ne, nloc,
nloc)`` array and scatters it through a cached CSR :class:`Pattern`.
Coefficient fields are evaluated at quadrature points with
:func:`values_at_qp` / :func:`gradients_at_qp`; vector fields carry a
leading component axis of length 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

from .errors import ConfigError
from .space import shape_functions
from .sparse import Pattern

DEFAULT_DEGREE = 6


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric rule on the reference triangle (measure 1/2)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _orbit(*coords):
    """Distinct permutations of a barycentric triple (or its 2-value shorthand)."""
    if len(coords) == 1:
        return [(1 / 3, 1 / 3, 1 / 3)]
    if len(coords) == 2:
        a, b = coords
        coords = (a, b, b)
    return sorted(set(permutations(coords)))


# (weight, orbit generator) pairs; weights normalized to sum 1
_RULES = {
    2: [(1 / 3, (2 / 3, 1 / 6))],
    4: [
        (0.223381589678011, (0.108103018168070, 0.445948490915965)),
        (0.109951743655322, (0.816847572980459, 0.091576213509771)),
    ],
    6: [
        (0.116786275726379, (0.501426509658179, 0.249286745170910)),
        (0.050844906370207, (0.873821971016996, 0.063089014491502)),
        (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399)),
    ],
    8: [
        (0.144315607677787, (1 / 3,)),
        (0.095091634267285, (0.081414823414554, 0.459292588292723)),
        (0.103217370534718, (0.658861384496480, 0.170569307751760)),
        (0.032458497623198, (0.898905543365938, 0.050547228317031)),
        (0.027230314174435, (0.008394777409958, 0.263112829634638, 0.728492392955404)),
    ],
}


@lru_cache(maxsize=None)
def quad_rule(degree):
    """Dunavant rule exact for polynomials up to ``degree`` (2, 4, 6 or 8)."""
    if degree not in _RULES:
        raise ConfigError(f"unsupported quadrature degree {degree}; use one of {sorted(_RULES)}")
    pts, wts = [], []
    for w, gen in _RULES[degree]:
        orbit = _orbit(*gen)
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    pts = np.array(pts)
    pts /= pts.sum(axis=1, keepdims=True)
    wts = np.array(wts)
    wts *= 0.5 / wts.sum()
    pts.flags.writeable = False
    wts.flags.writeable = False
    return QuadratureRule(pts, wts, degree)


@dataclass(frozen=True)
class ElementData:
    """Shape data of one space at the quadrature points of every triangle.

    phi : (nq, nloc) reference values
    dphi : (ne, nq, nloc, 2) physical gradients
    dphi_kaq : (ne, 2, nloc, nq) the same, laid out for batched products
    wdet : (ne, nq) quadrature weight times |det J|
    xq : (ne, nq, 2) physical quadrature points
    """

    phi: np.ndarray
    dphi: np.ndarray
    wdet: np.ndarray
    xq: np.ndarray
    dphi_kaq: np.ndarray


@lru_cache(maxsize=64)
def _geometry(mesh, degree):
    rule = quad_rule(degree)
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # (ne, 2, 2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    JinvT = np.linalg.inv(J).swapaxes(-1, -2)
    wdet = np.abs(det)[:, None] * rule.weights[None, :]
    xq = np.einsum("qk,ekd->eqd", rule.points, p)
    return JinvT, wdet, xq


@lru_cache(maxsize=64)
def element_data(dofmap, degree=DEFAULT_DEGREE):
    rule = quad_rule(degree)
    phi, rgrad = shape_functions(dofmap.kind, rule.points)
    JinvT, wdet, xq = _geometry(dofmap.mesh, degree)
    dphi = np.einsum("eij,qaj->eqai", JinvT, rgrad)
    return ElementData(phi, dphi, wdet, xq, np.ascontiguousarray(dphi.transpose(0, 3, 2, 1)))


def quadrature_points(dofmap, degree=DEFAULT_DEGREE):
    """Physical quadrature points ``(ne, nq, 2)`` and weights ``(ne, nq)``."""
    ed = element_data(dofmap, degree)
    return ed.xq, ed.wdet


# --------------------------------------------------------------------------
# sparsity patterns


@lru_cache(maxsize=64)
def scalar_pattern(row_dofmap, col_dofmap):
    r = row_dofmap.cell_dofs
    c = col_dofmap.cell_dofs
    rows = np.broadcast_to(r[:, :, None], (len(r), r.shape[1], c.shape[1]))
    cols = np.broadcast_to(c[:, None, :], rows.shape)
    return Pattern(rows, cols, (row_dofmap.n_scalar, col_dofmap.n_scalar))


@lru_cache(maxsize=64)
def block_pattern(dofmap):
    """Pattern of a 2x2-block operator on a component-blocked vector space."""
    cd = dofmap.cell_dofs
    n = dofmap.n_scalar
    ne, nl = cd.shape
    comp = np.arange(2)
    rows = comp[None, :, None, None, None] * n + cd[:, None, :, None, None]
    cols = comp[None, None, None, :, None] * n + cd[:, None, None, None, :]
    shape5 = (ne, 2, nl, 2, nl)
    return Pattern(np.broadcast_to(rows, shape5), np.broadcast_to(cols, shape5), (2 * n, 2 * n))


def assemble_scalar(row_dofmap, col_dofmap, elem):
    return scalar_pattern(row_dofmap, col_dofmap).assemble(elem)


def assemble_block(dofmap, elem):
    """Assemble element blocks ``elem[e, a, i, b, j]`` (a, b components)."""
    return block_pattern(dofmap).assemble(elem)


# --------------------------------------------------------------------------
# evaluation at quadrature points


def values_at_qp(dofmap, coef, degree=DEFAULT_DEGREE):
    """Field values ``(..., ne, nq)``; leading axes of ``coef`` are kept."""
    ed = element_data(dofmap, degree)
    local = np.asarray(coef, dtype=float)[..., dofmap.cell_dofs]
    return local @ ed.phi.T


def gradients_at_qp(dofmap, coef, degree=DEFAULT_DEGREE):
    """Field gradients ``(..., ne, nq, 2)``; last axis is d/dx, d/dy."""
    ed = element_data(dofmap, degree)
    local = np.asarray(coef, dtype=float)[..., dofmap.cell_dofs]
    g = (local[..., :, None, None, :] @ ed.dphi_kaq)[..., 0, :]  # (..., ne, 2, nq)
    return np.swapaxes(g, -1, -2)


def load_vector(dofmap, f_qp, degree=DEFAULT_DEGREE):
    """``b_i = ∫ f φ_i`` for quadrature values ``f_qp`` of shape ``(..., ne, nq)``."""
    ed = element_data(dofmap, degree)
    f_qp = np.asarray(f_qp, dtype=float)
    lead = f_qp.shape[:-2]
    elem = (f_qp * ed.wdet) @ ed.phi  # (..., ne, nloc)
    flat = elem.reshape((-1,) + elem.shape[-2:])
    out = np.stack([np.bincount(dofmap.cell_dofs.ravel(), weights=x.ravel(), minlength=dofmap.n_scalar)
                    for x in flat])
    return out.reshape(lead + (dofmap.n_scalar,))


def load_gradient(dofmap, g_qp, degree=DEFAULT_DEGREE):
    """``b_i = ∫ g·∇φ_i`` for a vector integrand ``g_qp`` of shape ``(..., ne, nq, 2)``."""
    ed = element_data(dofmap, degree)
    g_qp = np.asarray(g_qp, dtype=float)
    lead = g_qp.shape[:-3]
    gw = np.swapaxes(g_qp * ed.wdet[..., None], -1, -2)  # (..., ne, 2, nq)
    elem = (ed.dphi_kaq @ gw[..., None])[..., 0].sum(axis=-2)
    flat = elem.reshape((-1,) + elem.shape[-2:])
    out = np.stack([np.bincount(dofmap.cell_dofs.ravel(), weights=x.ravel(), minlength=dofmap.n_scalar)
                    for x in flat])
    return out.reshape(lead + (dofmap.n_scalar,))


def integrate(dofmap, f_qp, degree=DEFAULT_DEGREE):
    """``∫ f`` for quadrature values ``(..., ne, nq)``."""
    ed = element_data(dofmap, degree)
    return np.sum(np.asarray(f_qp) * ed.wdet, axis=(-2, -1))


# --------------------------------------------------------------------------
# matrices


def weighted_mass_elements(dofmap, c_qp, degree=DEFAULT_DEGREE):
    """Element matrices of ``∫ c φ_j φ_i`` with ``c_qp`` of shape ``(ne, nq)``."""
    ed = element_data(dofmap, degree)
    nl = ed.phi.shape[1]
    pp = (ed.phi[:, :, None] * ed.phi[:, None, :]).reshape(len(ed.phi), nl * nl)
    return ((np.asarray(c_qp) * ed.wdet) @ pp).reshape(-1, nl, nl)


def stiffness_elements(dofmap, degree=DEFAULT_DEGREE):
    ed = element_data(dofmap, degree)
    return np.einsum("eq,eqak,eqbk->eab", ed.wdet, ed.dphi, ed.dphi)


@lru_cache(maxsize=64)
def mass_matrix(dofmap, degree=DEFAULT_DEGREE):
    """Scalar mass matrix ``∫ φ_i φ_j`` (cached; do not modify in place)."""
    ed = element_data(dofmap, degree)
    return assemble_scalar(dofmap, dofmap, weighted_mass_elements(dofmap, np.ones_like(ed.wdet), degree))


@lru_cache(maxsize=64)
def stiffness_matrix(dofmap, degree=DEFAULT_DEGREE):
    """Scalar stiffness matrix ``∫ ∇φ_i·∇φ_j`` (cached; do not modify in place)."""
    return assemble_scalar(dofmap, dofmap, stiffness_elements(dofmap, degree))


def weighted_mass(dofmap, c_qp, degree=DEFAULT_DEGREE):
    return assemble_scalar(dofmap, dofmap, weighted_mass_elements(dofmap, c_qp, degree))


def convection_elements(dofmap, u_tilde, skew=True, degree=DEFAULT_DEGREE):
    ed = element_data(dofmap, degree)
    u_qp = values_at_qp(dofmap, u_tilde, degree)  # (2, ne, nq)
    adv = np.swapaxes((ed.dphi_kaq * u_qp.transpose(1, 0, 2)[:, :, None, :]).sum(axis=1), 1, 2)
    elem = np.einsum("qa,eqb->eab", ed.phi, ed.wdet[:, :, None] * adv)
    if skew:
        grad = gradients_at_qp(dofmap, u_tilde, degree)  # (2, ne, nq, 2)
        div = grad[0, ..., 0] + grad[1, ..., 1]
        elem += 0.5 * weighted_mass_elements(dofmap, div, degree)
    return elem


def convection_matrix(dofmap, u_tilde, skew=True, degree=DEFAULT_DEGREE):
    """Scalar convection operator ``∫ (ũ·∇φ_j) φ_i [+ ½ ∫ (∇·ũ) φ_j φ_i]``.

    The same matrix acts on each velocity component.  ``u_tilde`` is a
    vector coefficient array of shape ``(2, n)`` on ``dofmap``'s nodes.
    """
    return assemble_scalar(dofmap, dofmap, convection_elements(dofmap, u_tilde, skew, degree))


def block_mass_elements(dofmap, c_qp, degree=DEFAULT_DEGREE):
    """Element blocks of ``Σ_ab ∫ c_ab φ_j φ_i`` for ``c_qp`` of shape ``(2, 2, ne, nq)``."""
    ed = element_data(dofmap, degree)
    ne, nq = ed.wdet.shape
    nl = ed.phi.shape[1]
    pp = (ed.phi[:, :, None] * ed.phi[:, None, :]).reshape(nq, nl * nl)
    cw = np.asarray(c_qp) * ed.wdet  # (2, 2, ne, nq)
    elem = (cw @ pp).reshape(2, 2, ne, nl, nl)
    return elem.transpose(2, 0, 3, 1, 4)


def block_diagonal_elements(elem):
    """Lift scalar element matrices ``(ne, nl, nl)`` to identical diagonal blocks."""
    ne, nl, _ = elem.shape
    out = np.zeros((ne, 2, nl, 2, nl))
    out[:, 0, :, 0, :] = elem
    out[:, 1, :, 1, :] = elem
    return out


def director_reaction_elements(dofmap, d_tilde, coeff, degree=DEFAULT_DEGREE):
    d_qp = values_at_qp(dofmap, d_tilde, degree)  # (2, ne, nq)
    c = coeff * d_qp[:, None] * d_qp[None, :]
    return block_mass_elements(dofmap, c, degree)


def director_reaction_operator(dofmap, d_tilde, coeff, degree=DEFAULT_DEGREE):
    """``coeff ∫ (d̃·v)(d̃·φ)`` as a 2x2-block operator on vector P2."""
    return assemble_block(dofmap, director_reaction_elements(dofmap, d_tilde, coeff, degree))


# --------------------------------------------------------------------------
# right-hand sides and mixed P2/P1 operators


def elastic_rhs(dofmap_u, d_tilde, w_tilde, coeff, degree=DEFAULT_DEGREE):
    """Load vector ``coeff ∫ ((∇d̃)ᵀ w̃)·φ_i``, shape ``(2, n)``."""
    gd = gradients_at_qp(dofmap_u, d_tilde, degree)  # (2, ne, nq, 2): gd[a, ..., k] = ∂_k d_a
    w_qp = values_at_qp(dofmap_u, w_tilde, degree)  # (2, ne, nq)
    f = np.einsum("aeqk,aeq->keq", gd, w_qp)
    return coeff * load_vector(dofmap_u, f, degree)


@lru_cache(maxsize=64)
def gradient_matrices(dofmap_u, dofmap_p, degree=DEFAULT_DEGREE):
    """``G_k[i, j] = ∫ ∂_k ψ_j φ_i`` for P2 test ``φ_i`` and P1 trial ``ψ_j``."""
    eu = element_data(dofmap_u, degree)
    ep = element_data(dofmap_p, degree)
    mats = []
    for k in range(2):
        elem = np.einsum("eq,qa,eqb->eab", eu.wdet, eu.phi, ep.dphi[..., k])
        mats.append(assemble_scalar(dofmap_u, dofmap_p, elem))
    return tuple(mats)


@lru_cache(maxsize=64)
def divergence_matrices(dofmap_p, dofmap_u, degree=DEFAULT_DEGREE):
    """``D_k[i, j] = ∫ ψ_i ∂_k φ_j`` for P1 test ``ψ_i`` and P2 trial ``φ_j``."""
    eu = element_data(dofmap_u, degree)
    ep = element_data(dofmap_p, degree)
    mats = []
    for k in range(2):
        elem = np.einsum("eq,qa,eqb->eab", ep.wdet, ep.phi, eu.dphi[..., k])
        mats.append(assemble_scalar(dofmap_p, dofmap_u, elem))
    return tuple(mats)


def pressure_gradient_rhs(dofmap_u, p, dofmap_p, degree=DEFAULT_DEGREE):
    """``∫ ∇p·φ_i`` for both velocity components, shape ``(2, n_u)``."""
    Gx, Gy = gradient_matrices(dofmap_u, dofmap_p, degree)
    p = np.asarray(p, dtype=float)
    return np.stack([Gx @ p, Gy @ p])


def divergence_functional(dofmap_p, u, dofmap_u, degree=DEFAULT_DEGREE):
    """``∫ (∇·u) ψ_i`` for every P1 basis function."""
    Dx, Dy = divergence_matrices(dofmap_p, dofmap_u, degree)
    u = np.asarray(u, dtype=float)
    return Dx @ u[0] + Dy @ u[1]
