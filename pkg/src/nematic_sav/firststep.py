"""Initial levels: the data at t⁰ and the coupled first-order step to t¹.

The start-up scheme is backward Euler with the transport and stress
terms frozen at ``d⁰`` and is nonlinear only through the penalty gradient.
Two penalty gradients are available:

``"midpoint"`` (default)
    ``(|d¹|² + |d⁰|² - 2)(d¹ + d⁰) / (4ε²)``, the discrete gradient of
    ``F(d) = (|d|² - 1)² / (4ε²)``.  Its product with ``d¹ - d⁰`` is exactly
    ``F(d¹) - F(d⁰)``, and it is consistent for any ``ε``.
``"stabilized"``
    ``(|d¹|² d¹ - d⁰) / ε²``.  Also energy stable, but it differs from
    ``f(d¹)`` by ``(d¹ - d⁰)/ε²``.  When ``Δt ≫ ε²`` this freezes ``d¹`` near
    ``d⁰`` and leaves an O(Δt) error that the BDF2 steps never remove.

The system is solved monolithically in ``(d¹, u¹, p¹)`` with a Newton
iteration whose factorization is reused while the increments contract fast
enough (a chord step).  Lagging ``|d¹|²`` instead (plain Picard) diverges
once ``γ/ε²`` outweighs ``1/Δt``.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import assemble as asm
from .errors import ConfigError, FirstStepError
from .state import FieldState

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 100
REFACTOR_RATIO = 0.3


def penalty_q(disc, d, eps):
    """``(|d|² - 1)/ε²`` at quadrature points."""
    d_qp = disc.values(d)
    return (np.sum(d_qp**2, axis=0) - 1.0) / eps**2


def initial_state(disc, d0, u0, params):
    """Level-0 state: ``p⁰ = 0``, ``s⁰ = 1``, ``g⁰ = 0`` and both history slots equal."""
    d0 = np.array(d0, dtype=float)
    u0 = np.array(u0, dtype=float)
    if d0.shape != (2, disc.n) or u0.shape != (2, disc.n):
        raise ConfigError(f"initial data must have shape (2, {disc.n})")
    if np.any(u0[:, disc.V.boundary] != 0.0):
        raise ConfigError("initial velocity must vanish on the boundary")
    q0 = penalty_q(disc, d0, params.eps)
    w0 = disc.w_projection(d0, q0)
    zp = np.zeros(disc.nq_p)
    return FieldState(
        disc=disc, n=0, t=0.0, d=d0, d_prev=d0.copy(), u=u0, u_prev=u0.copy(),
        psi=zp.copy(), psi_prev=zp.copy(), p=zp.copy(), p_prev=zp.copy(),
        q=q0, q_prev=q0.copy(), w=w0, w_prev=w0.copy(), s=1.0, s_prev=1.0,
        g=zp.copy(), H=zp.copy(), K=1.0,
    )


class _FirstStepSystem:
    """Linear part of the start-up system and its Jacobian/residual."""

    def __init__(self, state0, params):
        disc = state0.disc
        self.disc = disc
        self.params = params
        dt, nu, lam, gam, eps = params.dt, params.nu, params.lam, params.gamma, params.eps
        V, deg = disc.V, disc.degree
        n, f = disc.n, disc.free
        self.n, self.nf, self.npp = n, len(f), disc.nq_p
        d0, u0 = state0.d, state0.u
        gd0 = disc.grads(d0)  # (2, ne, nq, 2): ∂_k d0_a

        # director block without the penalty Jacobian
        self.Ldd = asm.assemble_block(V, asm.block_diagonal_elements(disc.M_e / dt + gam * disc.K_e))
        # (u·∇d0)_a tested with director test functions: c[a, k] = ∂_k d0_a
        c_du = np.moveaxis(gd0, -1, 1)  # (a, k, ne, nq)
        Bdu = asm.assemble_block(V, asm.block_mass_elements(V, c_du, deg))
        fu = np.concatenate([f, n + f])
        self.Ldu = Bdu[:, fu]
        # momentum block
        conv = asm.convection_elements(V, u0, True, deg)
        stress = np.einsum("aeqk,aeql->kleq", gd0, gd0)
        elem = asm.block_diagonal_elements(disc.M_e / dt + conv + nu * disc.K_e)
        elem += (lam / gam) * asm.block_mass_elements(V, stress, deg)
        Luu = asm.assemble_block(V, elem)
        self.Luu = Luu[fu][:, fu]
        self.Lud = (lam / (gam * dt)) * Bdu.T.tocsr()[fu]
        G = sp.vstack([disc.G[0][f], disc.G[1][f]])
        Dv = sp.hstack([disc.Dv[0][:, f], disc.Dv[1][:, f]])
        self.upper = sp.bmat([[self.Luu, G], [Dv, None]])
        self.fu = fu

        # constant right-hand side
        t1 = params.dt
        md0 = disc.vmass(d0).ravel()
        self.d0 = d0
        self.midpoint = params.startup_penalty == "midpoint"
        rhs_d = md0 / dt if self.midpoint else (1.0 / dt + gam / eps**2) * md0
        rhs_u = (disc.vmass(u0).ravel() / dt)[fu] + self.Lud @ d0.ravel()
        if params.forcing is not None:
            fd_qp, fu_qp = (np.asarray(v) for v in params.forcing(t1, disc.xq[..., 0], disc.xq[..., 1]))
            rhs_d = rhs_d + disc.load(fd_qp).ravel()
            extra = disc.load(fu_qp) + (lam / gam) * disc.load(np.einsum("aeqk,aeq->keq", gd0, fd_qp))
            rhs_u = rhs_u + extra.ravel()[fu]
        self.rhs = np.concatenate([rhs_d, rhs_u, np.zeros(self.npp), [0.0]])

    def split(self, x):
        n, nf2 = self.n, 2 * self.nf
        d = x[: 2 * n].reshape(2, n)
        uf = x[2 * n: 2 * n + nf2]
        p = np.concatenate([[0.0], x[2 * n + nf2:]])
        u = np.zeros(2 * n)
        u[self.fu] = uf
        return d, u.reshape(2, n), p

    def penalty(self, d):
        """Penalty Jacobian block and the nonlinear penalty load at ``d``.

        The load is that of ``γ|d|² d/ε²`` (stabilized form, whose ``d⁰`` part
        sits in the right-hand side) or of the full midpoint gradient.
        """
        disc, g = self.disc, self.params.gamma / self.params.eps**2
        d_qp = disc.values(d)
        r2 = np.sum(d_qp**2, axis=0)
        if self.midpoint:
            d0_qp = disc.values(self.d0)
            s = d_qp + d0_qp
            a = 0.25 * (r2 + np.sum(d0_qp**2, axis=0) - 2.0)
            c = 0.5 * s[:, None] * d_qp[None, :]
            c[0, 0] += a
            c[1, 1] += a
            J = asm.assemble_block(disc.V, asm.block_mass_elements(disc.V, g * c, disc.degree))
            return J, g * disc.load(a * s).ravel()
        c = 2.0 * d_qp[:, None] * d_qp[None, :]
        c[0, 0] += r2
        c[1, 1] += r2
        J = asm.assemble_block(disc.V, asm.block_mass_elements(disc.V, g * c, disc.degree))
        N = g * disc.load(r2 * d_qp).ravel()
        return J, N

    def linear_operator(self):
        """Matrix on ``(d, u_free, p)`` without the penalty.

        The pressure is fixed by pinning its first vertex value to zero (that
        unknown is dropped); the mean is removed after convergence.  A mean
        multiplier instead would add a dense row and double the fill-in.
        """
        nb = self.upper.shape[0] - 2 * self.nf
        full = sp.bmat([
            [self.Ldd, sp.hstack([self.Ldu, sp.csr_matrix((2 * self.n, nb))])],
            [sp.vstack([self.Lud, sp.csr_matrix((nb, 2 * self.n))]), self.upper],
        ]).tocsr()
        keep = np.delete(np.arange(full.shape[0]), 2 * self.n + 2 * self.nf)
        self.rhs_red = np.delete(self.rhs[:-1], 2 * self.n + 2 * self.nf)
        return full[keep][:, keep].tocsr()

    def embed(self, Jpen, size):
        """Pad the director penalty block to the full system size."""
        Jpen = Jpen.tocoo()
        return sp.csr_matrix((Jpen.data, (Jpen.row, Jpen.col)), shape=(size, size))


def solve_first_step(state0, params, tol=NEWTON_TOL, maxit=NEWTON_MAXIT):
    """Advance the level-0 state to ``t¹ = Δt`` with the coupled first-order scheme.

    Returns the two-level state at ``n = 1``.  ``q¹`` is the penalty value
    of ``d¹``, ``s¹ = exp(-Δt/T)`` and ``w¹`` the weak ``-Δd¹ + q¹d¹``.

    The Jacobian factorization is reused (chord steps) until the increments
    stop contracting by ``REFACTOR_RATIO``.
    """
    disc = state0.disc
    sysm = _FirstStepSystem(state0, params)
    n, nf = disc.n, len(disc.free)
    L = sysm.linear_operator()
    x = np.concatenate([state0.d.ravel(), state0.u.ravel()[sysm.fu], np.zeros(disc.nq_p - 1)])
    lu = None
    history = []
    for it in range(1, maxit + 1):
        Jpen, N = sysm.penalty(x[: 2 * n].reshape(2, n))
        r = sysm.rhs_red - L @ x
        r[: 2 * n] -= N
        slow = len(history) >= 2 and history[-1] > REFACTOR_RATIO * history[-2]
        if lu is None or slow:
            lu = splu((L + sysm.embed(Jpen, L.shape[0])).tocsc())
        delta = lu.solve(r)
        x = x + delta
        xnorm = np.linalg.norm(x[: 2 * n + 2 * nf])
        inc = np.linalg.norm(delta[: 2 * n + 2 * nf]) / max(xnorm, 1e-300)
        history.append(inc)
        logger.debug("first step iteration %d: relative increment %.3e", it, inc)
        if not math.isfinite(inc):
            raise FirstStepError("first-step iteration produced non-finite values", inc)
        if inc < tol:
            break
    else:
        raise FirstStepError(f"first-step iteration did not converge in {maxit} iterations", history[-1])
    if len(history) >= 3 and not (history[-1] <= history[-2] <= history[-3]):
        logger.info("first-step increments not monotone over the last three iterates: %s", history[-3:])

    d1, u1, p1 = sysm.split(x)
    p1 = p1 - disc.integrate(disc.p1_values(p1)) / disc.area
    q1 = penalty_q(disc, d1, params.eps)
    w1 = disc.w_projection(d1, q1)
    zp = np.zeros(disc.nq_p)
    return FieldState(
        disc=disc, n=1, t=params.dt, d=d1, d_prev=state0.d, u=u1, u_prev=state0.u,
        psi=zp.copy(), psi_prev=state0.psi, p=p1, p_prev=state0.p,
        q=q1, q_prev=state0.q, w=w1, w_prev=state0.w,
        s=math.exp(-params.dt / params.T), s_prev=state0.s,
        g=zp.copy(), H=p1.copy(), K=1.0,
    )


def start(disc, d0, u0, params):
    """Return the level-0 and level-1 states."""
    s0 = initial_state(disc, d0, u0, params)
    return s0, solve_first_step(s0, params)
