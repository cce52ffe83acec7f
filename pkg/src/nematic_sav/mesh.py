"""Structured triangulations of axis-aligned rectangles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

BOUNDARY_TOL = 1e-12


@dataclass(eq=False)
class Mesh:
    """Triangulation of the rectangle ``domain = (xmin, xmax, ymin, ymax)``.

    Triangles are counter-clockwise vertex triples.  Local edge ``k`` of a
    triangle joins local vertices ``k`` and ``(k + 1) % 3``; ``tri_edges``
    maps it to a row of ``edges``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    boundary_vertex_flags: np.ndarray
    boundary_edge_flags: np.ndarray
    domain: tuple
    nx: int
    ny: int
    _areas: np.ndarray = field(default=None, repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def h(self):
        """Longest edge length (the cell diagonal on structured meshes)."""
        xmin, xmax, ymin, ymax = self.domain
        return float(np.hypot((xmax - xmin) / self.nx, (ymax - ymin) / self.ny))

    def signed_areas(self):
        if self._areas is None:
            p = self.vertices[self.triangles]
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            self._areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return self._areas

    def locate(self, points):
        """Return (triangle index, barycentric coordinates) for each point.

        Uses the structured cell layout, so it is O(1) per point.  Points on
        shared edges go to either neighbour; the FE functions agree there.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        xmin, xmax, ymin, ymax = self.domain
        hx = (xmax - xmin) / self.nx
        hy = (ymax - ymin) / self.ny
        sx = (points[:, 0] - xmin) / hx
        sy = (points[:, 1] - ymin) / hy
        i = np.clip(np.floor(sx).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor(sy).astype(int), 0, self.ny - 1)
        fx = sx - i
        fy = sy - j
        # lower triangle (v00, v10, v11) below the diagonal fx >= fy
        upper = fy > fx
        tri = 2 * (j * self.nx + i) + upper.astype(int)
        p = self.vertices[self.triangles[tri]]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        r = points - p[:, 0]
        xi = (r[:, 0] * e2[:, 1] - r[:, 1] * e2[:, 0]) / det
        eta = (e1[:, 0] * r[:, 1] - e1[:, 1] * r[:, 0]) / det
        bary = np.column_stack([1.0 - xi - eta, xi, eta])
        return tri, bary


def build_rect_mesh(domain, nx, ny):
    """Uniform triangulation with ``nx * ny`` cells, each cut along its
    lower-left to upper-right diagonal."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ConfigError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    xmin, xmax, ymin, ymax = (float(v) for v in domain)
    if not (xmax > xmin and ymax > ymin):
        raise ConfigError(f"degenerate rectangle {domain}")

    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (jj * (nx + 1) + ii).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])

    local = np.stack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)

    mesh = Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        tri_edges=tri_edges,
        boundary_vertex_flags=np.zeros(len(vertices), dtype=bool),
        boundary_edge_flags=np.zeros(len(edges), dtype=bool),
        domain=(xmin, xmax, ymin, ymax),
        nx=nx,
        ny=ny,
    )
    bv, be = classify_boundary(mesh)
    mesh.boundary_vertex_flags[bv] = True
    mesh.boundary_edge_flags[be] = True
    return mesh


def _on_boundary(points, domain):
    xmin, xmax, ymin, ymax = domain
    x, y = points[:, 0], points[:, 1]
    return (
        (np.abs(x - xmin) <= BOUNDARY_TOL)
        | (np.abs(x - xmax) <= BOUNDARY_TOL)
        | (np.abs(y - ymin) <= BOUNDARY_TOL)
        | (np.abs(y - ymax) <= BOUNDARY_TOL)
    )


def classify_boundary(mesh):
    """Indices of boundary vertices and boundary edges.

    An edge is on the boundary when both endpoints and its midpoint lie on
    the same side of the rectangle.
    """
    vflag = _on_boundary(mesh.vertices, mesh.domain)
    xmin, xmax, ymin, ymax = mesh.domain
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    m = 0.5 * (a + b)
    eflag = np.zeros(len(mesh.edges), dtype=bool)
    for axis, value in ((0, xmin), (0, xmax), (1, ymin), (1, ymax)):
        eflag |= (
            (np.abs(a[:, axis] - value) <= BOUNDARY_TOL)
            & (np.abs(b[:, axis] - value) <= BOUNDARY_TOL)
            & (np.abs(m[:, axis] - value) <= BOUNDARY_TOL)
        )
    return np.flatnonzero(vflag), np.flatnonzero(eflag)
