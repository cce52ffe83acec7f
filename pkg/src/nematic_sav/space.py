"""Lagrange P1/P2 degree-of-freedom maps, interpolation and point evaluation.

Vector fields use a component-blocked layout: coefficient arrays have shape
``(components, n_scalar)`` and ``ravel()`` gives ``[x-block, y-block]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mesh import Mesh

N_LOCAL = {"P1": 3, "P2": 6}


def shape_functions(kind, bary):
    """Reference shape values ``(npts, nloc)`` and gradients ``(npts, nloc, 2)``.

    ``bary`` holds barycentric coordinates ``(l0, l1, l2)`` with reference
    coordinates ``x = l1, y = l2``.
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    g = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    npts = len(bary)
    if kind == "P1":
        vals = np.column_stack([l0, l1, l2])
        grads = np.broadcast_to(g, (npts, 3, 2)).copy()
        return vals, grads
    if kind != "P2":
        raise ConfigError(f"unknown element kind {kind!r}")
    lam = (l0, l1, l2)
    vals = np.empty((npts, 6))
    grads = np.empty((npts, 6, 2))
    for i in range(3):
        vals[:, i] = lam[i] * (2.0 * lam[i] - 1.0)
        grads[:, i] = (4.0 * lam[i] - 1.0)[:, None] * g[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        vals[:, 3 + k] = 4.0 * lam[i] * lam[j]
        grads[:, 3 + k] = 4.0 * (lam[j][:, None] * g[i] + lam[i][:, None] * g[j])
    return vals, grads


@dataclass(eq=False)
class DofMap:
    """Global numbering for a scalar Lagrange space; vertices first, then edges."""

    mesh: Mesh
    kind: str
    components: int
    cell_dofs: np.ndarray
    node_coords: np.ndarray
    boundary: np.ndarray

    @property
    def n_scalar(self):
        return len(self.node_coords)

    @property
    def size(self):
        return self.n_scalar * self.components

    @property
    def n_local(self):
        return N_LOCAL[self.kind]

    def scalar(self):
        """Same numbering with a single component."""
        if self.components == 1:
            return self
        return DofMap(self.mesh, self.kind, 1, self.cell_dofs, self.node_coords, self.boundary)


def build_dofmap(mesh, kind="P2", components=1):
    if kind not in N_LOCAL:
        raise ConfigError(f"unknown element kind {kind!r}")
    if components not in (1, 2):
        raise ConfigError("components must be 1 or 2")
    if kind == "P1":
        return DofMap(mesh, kind, components, mesh.triangles.copy(), mesh.vertices.copy(),
                      mesh.boundary_vertex_flags.copy())
    nv = mesh.n_vertices
    cell_dofs = np.hstack([mesh.triangles, nv + mesh.tri_edges])
    coords = np.vstack([mesh.vertices, mesh.edge_midpoints])
    boundary = np.concatenate([mesh.boundary_vertex_flags, mesh.boundary_edge_flags])
    return DofMap(mesh, kind, components, cell_dofs, coords, boundary)


@dataclass
class Field:
    """Coefficient vector attached to a dofmap."""

    dofmap: DofMap
    coef: np.ndarray

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        expected = (self.dofmap.n_scalar,) if self.dofmap.components == 1 else (
            self.dofmap.components, self.dofmap.n_scalar)
        if self.coef.shape != expected:
            raise ConfigError(f"coefficient shape {self.coef.shape} does not match {expected}")

    def __array__(self, dtype=None, copy=None):
        return self.coef if dtype is None else self.coef.astype(dtype)


def interpolate(f, dofmap):
    """Nodal interpolant of ``f(x, y)``; vector functions return a sequence
    ``(fx, fy)`` or an array with leading axis 2."""
    x, y = dofmap.node_coords[:, 0], dofmap.node_coords[:, 1]
    vals = np.asarray(f(x, y), dtype=float)
    if dofmap.components == 1:
        return Field(dofmap, np.broadcast_to(vals, (dofmap.n_scalar,)).copy())
    return Field(dofmap, np.broadcast_to(vals, (dofmap.components, dofmap.n_scalar)).copy())


def physical_gradients(mesh, tri, ref_grads):
    """Map reference gradients ``(..., nloc, 2)`` to triangle ``tri``."""
    p = mesh.vertices[mesh.triangles[tri]]
    J = np.stack([p[..., 1, :] - p[..., 0, :], p[..., 2, :] - p[..., 0, :]], axis=-1)
    JinvT = np.linalg.inv(J).swapaxes(-1, -2)
    return np.einsum("...ij,...kj->...ki", JinvT, ref_grads)


def evaluate(field, tri, bary):
    """Value and gradient of an FE field at a point of triangle ``tri``.

    For a scalar field returns ``(value, grad[2])``; for a vector field
    ``(value[c], grad[c, 2])`` with ``grad[c, k] = d field_c / d x_k``.
    """
    dm = field.dofmap
    if not 0 <= tri < dm.mesh.n_triangles:
        raise IndexError(f"triangle index {tri} out of range")
    vals, rgrads = shape_functions(dm.kind, bary)
    grads = physical_gradients(dm.mesh, tri, rgrads[0])
    local = np.asarray(field.coef)[..., dm.cell_dofs[tri]]
    return local @ vals[0], local @ grads


def evaluate_points(dofmap, coef, points):
    """Values and gradients of coefficient array ``coef`` at arbitrary points."""
    tri, bary = dofmap.mesh.locate(points)
    vals, rgrads = shape_functions(dofmap.kind, bary)
    grads = physical_gradients(dofmap.mesh, tri, rgrads)
    local = np.asarray(coef)[..., dofmap.cell_dofs[tri]]
    value = np.einsum("...pa,pa->...p", local, vals)
    gradient = np.einsum("...pa,pak->...pk", local, grads)
    return value, gradient
