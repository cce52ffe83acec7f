"""One BDF2 step of the PCSAV scheme through the hat/breve splitting.

Every K-dependent unknown is written ``v = v_hat + K v_breve``.  The hat
parts carry the history, the pressure and all forcing; the breve parts are
driven by the coupling terms that the auxiliary scalar multiplies.  Once
both parts are known, ``K`` solves the scalar equation ``A K = B``.

All inner products entering ``A`` and ``B`` are taken as load vectors
dotted with P2 coefficient arrays, which are the same discrete forms used
in the linear systems; this keeps the discrete energy law exact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import assemble as asm
from .errors import InvariantViolation
from .sparse import Factorization, block_jacobi2, solve_spd
from .state import Discretization, FieldState, SimParams  # noqa: F401  (re-exported)

logger = logging.getLogger(__name__)

QUIESCENT = 1e-300


@dataclass
class Extrapolants:
    """Second-order extrapolations and the coupling loads built from them."""

    d: np.ndarray
    u: np.ndarray
    w: np.ndarray
    d_qp: np.ndarray
    u_qp: np.ndarray
    transport: np.ndarray  # (ũ·∇d̃, φ_i), shape (2, n)
    stress: np.ndarray  # ((∇d̃)ᵀw̃, φ_i), shape (2, n)
    convection: np.ndarray = None  # ((ũ·∇)ũ, φ_i), explicit scheme only


@dataclass
class Parts:
    """Hat/breve pairs; index 0 is the hat part, index 1 the breve part."""

    d: np.ndarray  # (2, 2, n)
    u: np.ndarray  # (2, 2, n), intermediate velocity u_star
    psi: np.ndarray  # (2, n_p)
    p: np.ndarray  # (2, n_p)
    z: np.ndarray  # (2, n_p), P1 projection of div u_star
    w: np.ndarray  # (2, 2, n)


def extrapolate(state, explicit_convection=False):
    disc = state.disc
    d = 2.0 * state.d - state.d_prev
    u = 2.0 * state.u - state.u_prev
    w = 2.0 * state.w - state.w_prev
    d_qp = disc.values(d)
    gd = disc.grads(d)  # (2, ne, nq, 2)
    u_qp = disc.values(u)
    w_qp = disc.values(w)
    transport = disc.load(np.einsum("keq,aeqk->aeq", u_qp, gd))
    stress = disc.load(np.einsum("aeqk,aeq->keq", gd, w_qp))
    ext = Extrapolants(d, u, w, d_qp, u_qp, transport, stress)
    if explicit_convection:
        gu = disc.grads(u)
        ext.convection = disc.load(np.einsum("keq,aeqk->aeq", u_qp, gu))
    return ext


def director_operator(disc, d_qp, params):
    a = 1.5 / params.dt
    c = (2.0 * params.gamma / params.eps**2) * d_qp[:, None] * d_qp[None, :]
    elem = asm.block_diagonal_elements(a * disc.M_e + params.gamma * disc.K_e)
    elem += asm.block_mass_elements(disc.V, c, disc.degree)
    return asm.assemble_block(disc.V, elem)


def solve_director_parts(state, params, ext, loads=None):
    """Director hat/breve parts with natural boundary conditions.

    Both share ``(3/(2Δt)) M + γ K + (2γ/ε²) R(d̃)``; the hat right-hand
    side carries the BDF2 history and the frozen part of ``q``, the breve
    right-hand side the transport ``-ũ·∇d̃``.
    """
    disc = state.disc
    dt, gam, eps = params.dt, params.gamma, params.eps
    hist = 4.0 * state.d - state.d_prev
    qb = (4.0 * state.q - state.q_prev) / 3.0
    proj = np.einsum("aeq,aeq->eq", ext.d_qp, disc.values(hist))
    rhs_hat = (disc.vmass(hist) / (2.0 * dt)
               - gam * disc.load(qb * ext.d_qp)
               + (2.0 * gam / (3.0 * eps**2)) * disc.load(proj * ext.d_qp))
    if loads is not None:
        rhs_hat += loads[0]
    rhs_breve = -ext.transport
    A = director_operator(disc, ext.d_qp, params)
    b = np.stack([rhs_hat.ravel(), rhs_breve.ravel()], axis=1)
    # the hat part is close to d̃; the ε⁻² reaction couples the two
    # components at each node, which the 2x2 block preconditioner resolves
    x0 = np.stack([ext.d.ravel(), np.zeros(2 * disc.n)], axis=1)
    x = solve_spd(A, b, tol=params.tol, maxit=params.maxit, x0=x0, dinv=block_jacobi2(A))
    return x.T.reshape(2, 2, disc.n)


def restrict_free(disc, A):
    """Rows and columns of the interior velocity dofs (homogeneous Dirichlet)."""
    f = disc.free
    return A[f][:, f]


def _solve_free(disc, solver, rhs):
    """Solve on the interior dofs for right-hand sides ``rhs`` of shape (k, n).

    ``solver`` maps an ``(n_free, k)`` block to the solution block.
    """
    f = disc.free
    sol = np.zeros_like(rhs)
    sol[:, f] = solver(rhs[:, f].T).T
    return sol


def velocity_history_rhs(state, params, loads=None):
    """Hat momentum right-hand side ``(4uⁿ-uⁿ⁻¹)/(2Δt) - ∇pⁿ + F_u``."""
    disc = state.disc
    rhs = (4.0 * disc.velocity_load(state.u, state.psi)
           - disc.velocity_load(state.u_prev, state.psi_prev)) / (2.0 * params.dt)
    rhs -= disc.grad_p1(state.p)
    if loads is not None:
        rhs += loads[1]
    return rhs


def solve_velocity_star_parts(state, params, ext, loads=None):
    """Intermediate-velocity parts with the implicit skew-symmetric convection.

    The operator ``(3/(2Δt)) M + C(ũ) + ν K`` is the same for both velocity
    components and changes every step; it is factorized once per step and
    applied to the four hat/breve component right-hand sides.
    """
    disc = state.disc
    A = (1.5 / params.dt) * disc.M + asm.convection_matrix(disc.V, ext.u, True, disc.degree) + params.nu * disc.K
    rhs = np.concatenate([velocity_history_rhs(state, params, loads), params.lam * ext.stress])
    sol = _solve_free(disc, Factorization(restrict_free(disc, A)).solve, rhs)
    return sol.reshape(2, 2, disc.n)


def pressure_correct(disc, u_star, base_p, params):
    """Rotational pressure correction of one or more intermediate velocities.

    ``u_star`` has shape ``(k, 2, n)`` and ``base_p`` ``(k, n_p)``.  Solves the
    Neumann problem ``(∇ψ, ∇χ) = (u_star, ∇χ)`` for mean-zero ``ψ``, so the
    corrected velocity is ``u_star - ∇ψ`` and
    ``p = base_p + (3/(2Δt)) ψ - ν Π₁(∇·u_star)``.

    Returns ``(psi, p, z)`` with ``z = Π₁(∇·u_star)``.
    """
    u_star = np.asarray(u_star, dtype=float)
    div = np.stack([disc.divergence(u) for u in u_star])  # (k, n_p)
    psi = disc.p1_poisson_solve(-div)
    z = disc.p1_mass_solve(div)
    p = np.asarray(base_p, dtype=float) + (1.5 / params.dt) * psi - params.nu * z
    return psi, p, z


def compute_w_parts(state, d_parts, params, ext, loads=None):
    """Chemical potential parts from the director equation (mass solves only).

    ``γ (w, v) = -((3d - 4dⁿ + dⁿ⁻¹)/(2Δt), v) - K (ũ·∇d̃, v) + (F_d, v)``.
    """
    disc = state.disc
    dt, gam = params.dt, params.gamma
    rhs = [ext.transport]
    if loads is not None:
        rhs.append(loads[0])
    sol = disc.mass_solve(np.stack(rhs))
    hat_time = (3.0 * d_parts[0] - 4.0 * state.d + state.d_prev) / (2.0 * dt)
    w_hat = -hat_time / gam
    if loads is not None:
        w_hat += sol[1] / gam
    w_breve = -(1.5 / dt * d_parts[1] + sol[0]) / gam
    return np.stack([w_hat, w_breve])


def k_coefficients(state, parts, params, ext):
    """Return ``(A, B)`` of the scalar equation ``A K = B``."""
    dt, T = params.dt, params.T
    e = math.exp(-(state.t + dt) / T)
    A = (1.5 / dt + 1.0 / T) * e * e - np.sum(ext.transport * parts.w[1]) + np.sum(ext.stress * parts.u[1])
    B = ((4.0 * state.s - state.s_prev) / (2.0 * dt)) * e + np.sum(ext.transport * parts.w[0]) \
        - np.sum(ext.stress * parts.u[0])
    if ext.convection is not None:
        A -= np.sum(ext.convection * parts.u[1]) / params.lam
        B += np.sum(ext.convection * parts.u[0]) / params.lam
    return float(A), float(B)


def solve_K(state, parts, params, ext):
    """Solve ``A K = B``; returns ``(K, s, A)`` with ``s = exp(-t/T) K``."""
    A, B = k_coefficients(state, parts, params, ext)
    if not math.isfinite(A) or not math.isfinite(B):
        raise InvariantViolation(f"non-finite SAV coefficients A={A}, B={B}")
    if abs(A) < QUIESCENT and abs(B) < QUIESCENT:
        K = 0.0
    elif A <= 0.0:
        raise InvariantViolation(f"SAV coefficient A={A:.6e} is not positive at step {state.n + 1}")
    else:
        K = B / A
    s = math.exp(-(state.t + params.dt) / params.T) * K
    return K, s, A


def assemble_step(state, parts, K, A, params, ext):
    """Recombine the parts with ``K`` and shift the history by one level."""
    disc = state.disc
    d = parts.d[0] + K * parts.d[1]
    u = parts.u[0] + K * parts.u[1]
    psi = parts.psi[0] + K * parts.psi[1]
    p = parts.p[0] + K * parts.p[1]
    z = parts.z[0] + K * parts.z[1]
    w = parts.w[0] + K * parts.w[1]
    bdf = disc.values(3.0 * d - 4.0 * state.d + state.d_prev)
    q = (4.0 * state.q - state.q_prev) / 3.0 \
        + (2.0 / (3.0 * params.eps**2)) * np.einsum("aeq,aeq->eq", ext.d_qp, bdf)
    g = state.g + params.nu * z
    return FieldState(
        disc=disc, n=state.n + 1, t=state.t + params.dt,
        d=d, d_prev=state.d, u=u, u_prev=state.u, psi=psi, psi_prev=state.psi,
        p=p, p_prev=state.p, q=q, q_prev=state.q, w=w, w_prev=state.w,
        s=math.exp(-(state.t + params.dt) / params.T) * K, s_prev=state.s,
        g=g, H=p + g, K=K, A=A,
    )


def advance(state, params, velocity_solver, explicit_convection):
    if state.n < 1:
        raise ValueError("BDF2 steps need two time levels; run the first step first")
    disc = state.disc
    loads = params.forcing_loads(disc, state.t + params.dt)
    ext = extrapolate(state, explicit_convection)
    d_parts = solve_director_parts(state, params, ext, loads)
    u_parts = velocity_solver(state, params, ext, loads)
    psi, p, z = pressure_correct(disc, u_parts, np.stack([state.p, np.zeros_like(state.p)]), params)
    w_parts = compute_w_parts(state, d_parts, params, ext, loads)
    parts = Parts(d_parts, u_parts, psi, p, z, w_parts)
    K, _s, A = solve_K(state, parts, params, ext)
    return assemble_step(state, parts, K, A, params, ext)


def step(state, params):
    """One PCSAV step from levels (n-1, n) to n+1."""
    return advance(state, params, solve_velocity_star_parts, explicit_convection=False)
