"""Simulation parameters, the discrete operator bundle and the two-level state.

Velocity representation
-----------------------
The end-of-step velocity of the pressure-correction step is kept as the
pair ``(u_star, psi)`` with ``u = u_star - grad(psi)``: ``u_star`` is the
continuous P2 intermediate velocity (zero on the boundary) and ``psi`` a
mean-zero P1 potential.  This broken field is exactly orthogonal to the
gradients of P1 functions, so ``(u, grad H) = 0`` holds discretely.  Its
inner products with P2 test functions are ``M u_star - G psi``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import assemble as asm
from .errors import ConfigError
from .mesh import Mesh
from .space import build_dofmap
from .sparse import DEFAULT_MAXIT, DEFAULT_TOL, Factorization

logger = logging.getLogger(__name__)

SCHEMES = ("pcsav", "pcsav-ect")
STARTUP_PENALTIES = ("midpoint", "stabilized")


@dataclass
class SimParams:
    """Physical and numerical parameters of one run.

    ``forcing``, when given, is ``forcing(t, x, y) -> (F_d, F_u)`` returning
    arrays with a leading component axis of length 2.  ``startup_penalty``
    selects the penalty gradient of the start-up step (see
    :mod:`nematic_sav.firststep`).
    """

    nu: float
    lam: float
    gamma: float
    eps: float
    dt: float
    T: float
    scheme: str = "pcsav"
    tol: float = DEFAULT_TOL
    maxit: int = DEFAULT_MAXIT
    forcing: Optional[Callable] = None
    startup_penalty: str = "midpoint"

    def __post_init__(self):
        for name in ("nu", "lam", "gamma", "eps", "dt", "T", "tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"parameter {name} must be a positive number, got {v!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.startup_penalty not in STARTUP_PENALTIES:
            raise ConfigError(f"startup_penalty must be one of {STARTUP_PENALTIES}, "
                              f"got {self.startup_penalty!r}")
        if self.eps > 0.5:
            logger.warning("penalty parameter eps=%g is not small", self.eps)

    def forcing_loads(self, disc, t):
        """Load vectors ``(F_d, F_u)`` of shape ``(2, n)`` at time ``t``, or ``None``."""
        if self.forcing is None:
            return None
        x, y = disc.xq[..., 0], disc.xq[..., 1]
        fd, fu = self.forcing(t, x, y)
        return disc.load(np.asarray(fd)), disc.load(np.asarray(fu))


class Discretization:
    """Taylor-Hood P2/P1 spaces on a mesh and the constant operators.

    Matrices are scalar (one velocity or director component); vector
    arrays are ``(2, n)``.
    """

    def __init__(self, mesh: Mesh, degree=asm.DEFAULT_DEGREE, tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT):
        self.mesh = mesh
        self.degree = degree
        self.tol = tol
        self.maxit = maxit
        self.V = build_dofmap(mesh, "P2")
        self.Q = build_dofmap(mesh, "P1")
        self.n = self.V.n_scalar
        self.nq_p = self.Q.n_scalar
        self.M = asm.mass_matrix(self.V, degree)
        self.K = asm.stiffness_matrix(self.V, degree)
        self.M1 = asm.mass_matrix(self.Q, degree)
        self.K1 = asm.stiffness_matrix(self.Q, degree)
        self.G = asm.gradient_matrices(self.V, self.Q, degree)
        self.Dv = asm.divergence_matrices(self.Q, self.V, degree)
        ed = asm.element_data(self.V, degree)
        self.M_e = asm.weighted_mass_elements(self.V, np.ones_like(ed.wdet), degree)
        self.K_e = asm.stiffness_elements(self.V, degree)
        self.xq = ed.xq
        self.wdet = ed.wdet
        self.free = np.flatnonzero(~self.V.boundary)
        self.area = float(self.wdet.sum())
        self._cache = {}

    # ---- evaluation -----------------------------------------------------
    def values(self, coef):
        return asm.values_at_qp(self.V, coef, self.degree)

    def grads(self, coef):
        return asm.gradients_at_qp(self.V, coef, self.degree)

    def p1_values(self, coef):
        return asm.values_at_qp(self.Q, coef, self.degree)

    def p1_grads(self, coef):
        return asm.gradients_at_qp(self.Q, coef, self.degree)

    def load(self, f_qp):
        return asm.load_vector(self.V, f_qp, self.degree)

    def integrate(self, f_qp):
        return float(asm.integrate(self.V, f_qp, self.degree))

    # ---- solves ---------------------------------------------------------
    def factor(self, key, matrix, singular=False):
        """Cached :class:`Factorization` of a constant operator."""
        return self.cached(("lu",) + tuple(key), lambda: Factorization(matrix(), singular))

    @staticmethod
    def _rowwise(fact, b, size):
        b = np.asarray(b, dtype=float)
        lead = b.shape[:-1]
        return fact.solve(b.reshape(-1, size).T).T.reshape(lead + (size,))

    def mass_solve(self, b):
        """Solve ``M x = b`` row-wise for ``b`` of shape ``(..., n)``."""
        return self._rowwise(self.factor(("M",), lambda: self.M), b, self.n)

    def p1_mass_solve(self, b):
        return self._rowwise(self.factor(("M1",), lambda: self.M1), b, self.nq_p)

    def p1_poisson_solve(self, b):
        """Mean-zero solution of the pure-Neumann P1 problem ``K1 x = b``, row-wise."""
        return self._rowwise(self.factor(("K1",), lambda: self.K1, singular=True), b, self.nq_p)

    # ---- vector helpers -------------------------------------------------
    def vmass(self, x):
        """``M`` applied to each component of ``(..., 2, n)``."""
        x = np.asarray(x)
        return (self.M @ x.reshape(-1, self.n).T).T.reshape(x.shape)

    def vstiff(self, x):
        x = np.asarray(x)
        return (self.K @ x.reshape(-1, self.n).T).T.reshape(x.shape)

    def grad_p1(self, psi):
        """``(grad psi, phi_i)`` for each velocity component, shape ``(2, n)``."""
        return np.stack([self.G[0] @ psi, self.G[1] @ psi])

    def divergence(self, u):
        """``(div u, psi_i)`` over the P1 basis."""
        return self.Dv[0] @ u[0] + self.Dv[1] @ u[1]

    def velocity_load(self, u_star, psi):
        """``(u, phi_i)`` of the broken velocity ``u = u_star - grad psi``."""
        return self.vmass(u_star) - self.grad_p1(psi)

    def velocity_norm2(self, u_star, psi):
        """``||u_star - grad psi||^2``."""
        return float(np.sum(u_star * self.vmass(u_star)) - 2.0 * np.sum(u_star * self.grad_p1(psi))
                     + psi @ (self.K1 @ psi))

    def vnorm2(self, x):
        return float(np.sum(x * self.vmass(x)))

    def vsemi2(self, x):
        return float(np.sum(x * self.vstiff(x)))

    def w_projection(self, d, q):
        """Weak ``-Δd + q d``: solve ``(w, v) = (∇d, ∇v) + (q d, v)``."""
        return self.mass_solve(self.vstiff(d) + self.load(q * self.values(d)))

    def cached(self, key, factory):
        if key not in self._cache:
            self._cache[key] = factory()
        return self._cache[key]


@dataclass
class FieldState:
    """All discrete unknowns at time levels n and n-1.

    ``u`` is the continuous part ``u_star`` of the broken velocity and
    ``psi`` its P1 correction potential (see module docstring).  ``q`` lives
    at quadrature points, shape ``(ne, nq)``.
    """

    disc: Discretization = field(repr=False)
    n: int
    t: float
    d: np.ndarray
    d_prev: np.ndarray
    u: np.ndarray
    u_prev: np.ndarray
    psi: np.ndarray
    psi_prev: np.ndarray
    p: np.ndarray
    p_prev: np.ndarray
    q: np.ndarray
    q_prev: np.ndarray
    w: np.ndarray
    w_prev: np.ndarray
    s: float
    s_prev: float
    g: np.ndarray
    H: np.ndarray
    K: float = 1.0
    A: float = float("nan")

    def copy(self):
        out = replace(self)
        for name in ("d", "d_prev", "u", "u_prev", "psi", "psi_prev", "p", "p_prev",
                     "q", "q_prev", "w", "w_prev", "g", "H"):
            setattr(out, name, getattr(self, name).copy())
        return out

    def velocity_qp(self):
        """End-of-step velocity ``u_star - grad psi`` at quadrature points."""
        return self.disc.values(self.u) - np.moveaxis(self.disc.p1_grads(self.psi), -1, 0)

    def velocity_norm2(self):
        return self.disc.velocity_norm2(self.u, self.psi)
