"""CSR matrices, Krylov solvers and cached sparse factorizations.

Matrices are ``scipy.sparse.csr_matrix`` instances with sorted, unique
column indices.  The iterative solvers are preconditioned conjugate
gradients (symmetric positive (semi)definite systems) and BiCGStab (general
square systems).  Both accept a block of right-hand sides ``b`` of shape
``(n, k)`` and iterate the columns independently, which lets the hat/breve
pairs of the splitting share every matrix-vector product.

:class:`Factorization` wraps a sparse LU factorization (SuperLU through
``scipy.sparse.linalg.splu``) for operators that are solved many times.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigError, ConvergenceError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAXIT = 10_000
DENSE_LIMIT = 5_000

SparseMatrix = sp.csr_matrix


def from_triplets(rows, cols, vals, shape):
    """CSR matrix from coordinate triplets; duplicate entries are summed."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    n, m = shape
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise ConfigError("triplet index out of range")
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


class Pattern:
    """Fixed CSR sparsity for element-by-element assembly.

    ``rows`` and ``cols`` are integer arrays of identical shape listing the
    global position of every element-matrix entry.  ``assemble`` scatters a
    value array of that shape with a single ``bincount``.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        key = rows * shape[1] + cols
        uniq, self.inverse = np.unique(key, return_inverse=True)
        self.inverse = self.inverse.ravel()
        self.indices = (uniq % shape[1]).astype(np.int32)
        urows = uniq // shape[1]
        self.indptr = np.zeros(shape[0] + 1, dtype=np.int32)
        np.cumsum(np.bincount(urows, minlength=shape[0]), out=self.indptr[1:])
        self.shape = shape
        self.nnz = len(uniq)

    def assemble(self, values):
        data = np.bincount(self.inverse, weights=np.asarray(values, dtype=float).ravel(),
                           minlength=self.nnz)
        A = sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        A.has_sorted_indices = True
        return A


def _as_columns(b):
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        return b[:, None].copy(), True
    return b.copy(), False


def _jacobi(A):
    d = A.diagonal()
    if np.any(d == 0.0):
        raise ConfigError("Jacobi preconditioner needs a nonzero diagonal")
    return 1.0 / d


def block_jacobi2(A):
    """Inverse of the 2x2 nodal diagonal blocks of a component-blocked matrix.

    ``A`` acts on ``(2n,)`` vectors ordered ``[x_0 .. x_{n-1}, y_0 .. y_{n-1}]``;
    the returned callable applies the inverse blocks to ``(2n, k)`` arrays.
    """
    n = A.shape[0] // 2
    if A.shape != (2 * n, 2 * n):
        raise ConfigError("block Jacobi needs a square matrix of even size")
    diag = A.diagonal()
    a, d = diag[:n], diag[n:]
    b, c = A.diagonal(n), A.diagonal(-n)
    det = a * d - b * c
    if np.any(det == 0.0):
        raise ConfigError("singular 2x2 diagonal block")
    ia, ib, ic, id_ = d / det, -b / det, -c / det, a / det

    def apply(R):
        x, y = R[:n], R[n:]
        return np.concatenate([ia[:, None] * x + ib[:, None] * y, ic[:, None] * x + id_[:, None] * y])
    return apply


def _preconditioner(A, dinv):
    if dinv is None:
        dinv = _jacobi(A)
    if callable(dinv):
        return dinv
    return lambda R: dinv[:, None] * R


def solve_spd(A, b, tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT, x0=None, singular=False, dinv=None):
    """Preconditioned conjugate gradients.

    ``dinv`` is the inverse diagonal (Jacobi, the default) or a callable
    applying a symmetric positive definite preconditioner to a column block.
    With ``singular=True`` the matrix is taken to have the constants as its
    kernel (pure-Neumann Laplacian): the right-hand side is made compatible
    by removing its mean and the returned solution has zero mean.
    """
    B, vec = _as_columns(b)
    if singular:
        B -= B.mean(axis=0)
    prec = _preconditioner(A, dinv)
    X = np.zeros_like(B) if x0 is None else _as_columns(x0)[0].copy()
    bnorm = np.linalg.norm(B, axis=0)
    bnorm[bnorm == 0.0] = 1.0
    total = 0
    for _restart in range(3):
        R = B - A @ X
        res = np.linalg.norm(R, axis=0) / bnorm
        active = np.flatnonzero(res > tol)
        if active.size == 0:
            break
        Z = prec(R[:, active])
        P = Z.copy()
        rz = np.einsum("ij,ij->j", R[:, active], Z)
        Ra = R[:, active]
        Xa = X[:, active]
        idx = np.arange(active.size)
        while idx.size:
            if total >= maxit:
                worst = float(np.max(np.linalg.norm(Ra[:, idx], axis=0) / bnorm[active[idx]]))
                raise ConvergenceError("conjugate gradients did not converge", worst, total)
            Pi = P[:, idx]
            Q = A @ Pi
            pq = np.einsum("ij,ij->j", Pi, Q)
            if np.any(pq <= 0.0):
                raise ConvergenceError("conjugate gradients broke down (matrix not positive definite)",
                                       float("nan"), total)
            alpha = rz[idx] / pq
            Xa[:, idx] += alpha * Pi
            Ri = Ra[:, idx] - alpha * Q
            Ra[:, idx] = Ri
            rn = np.linalg.norm(Ri, axis=0) / bnorm[active[idx]]
            keep = rn > tol
            Zi = prec(Ri[:, keep])
            rz_new = np.einsum("ij,ij->j", Ri[:, keep], Zi)
            kept = idx[keep]
            P[:, kept] = Zi + (rz_new / rz[kept]) * Pi[:, keep]
            rz[kept] = rz_new
            idx = kept
            total += 1
        X[:, active] = Xa
    res = np.linalg.norm(B - A @ X, axis=0) / bnorm
    if np.any(res > tol):
        raise ConvergenceError("conjugate gradients stagnated", float(res.max()), total)
    if singular:
        X -= X.mean(axis=0)
    logger.debug("cg: %d iterations, residual %.2e", total, res.max())
    return X[:, 0] if vec else X


def solve_general(A, b, tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT, x0=None, dinv=None):
    """Right-preconditioned BiCGStab without restarts inside a sweep.

    A stagnating or broken-down sweep is restarted from the current iterate
    at most twice before :class:`ConvergenceError` is raised.
    """
    B, vec = _as_columns(b)
    prec = _preconditioner(A, dinv)
    X = np.zeros_like(B) if x0 is None else _as_columns(x0)[0].copy()
    bnorm = np.linalg.norm(B, axis=0)
    bnorm[bnorm == 0.0] = 1.0
    total = 0
    for _restart in range(3):
        R = B - A @ X
        res = np.linalg.norm(R, axis=0) / bnorm
        active = np.flatnonzero(res > tol)
        if active.size == 0:
            break
        Xa = X[:, active]
        Ra = R[:, active]
        Rhat = Ra.copy()
        k = active.size
        P = np.zeros_like(Ra)
        V = np.zeros_like(Ra)
        rho = np.ones(k)
        alpha = np.ones(k)
        omega = np.ones(k)
        idx = np.arange(k)
        while idx.size:
            if total >= maxit:
                worst = float(np.max(np.linalg.norm(Ra[:, idx], axis=0) / bnorm[active[idx]]))
                raise ConvergenceError("BiCGStab did not converge", worst, total)
            total += 1
            Ri = Ra[:, idx]
            rho_new = np.einsum("ij,ij->j", Rhat[:, idx], Ri)
            ok = (rho_new != 0.0) & (omega[idx] != 0.0)
            if not np.all(ok):
                break
            beta = (rho_new / rho[idx]) * (alpha[idx] / omega[idx])
            Pi = Ri + beta * (P[:, idx] - omega[idx] * V[:, idx])
            Y = prec(Pi)
            Vi = A @ Y
            den = np.einsum("ij,ij->j", Rhat[:, idx], Vi)
            if np.any(den == 0.0):
                break
            a = rho_new / den
            S = Ri - a * Vi
            Xa[:, idx] += a * Y
            sn = np.linalg.norm(S, axis=0) / bnorm[active[idx]]
            done = sn <= tol
            Zs = prec(S)
            T = A @ Zs
            tt = np.einsum("ij,ij->j", T, T)
            tt[tt == 0.0] = 1.0
            om = np.where(done, 0.0, np.einsum("ij,ij->j", T, S) / tt)
            Xa[:, idx] += om * Zs
            Rn = S - om * T
            Ra[:, idx] = Rn
            P[:, idx] = Pi
            V[:, idx] = Vi
            rho[idx] = rho_new
            alpha[idx] = a
            omega[idx] = om
            rn = np.linalg.norm(Rn, axis=0) / bnorm[active[idx]]
            idx = idx[(rn > tol) & ~done]
        X[:, active] = Xa
    res = np.linalg.norm(B - A @ X, axis=0) / bnorm
    if np.any(res > tol):
        raise ConvergenceError("BiCGStab broke down or stagnated", float(res.max()), total)
    logger.debug("bicgstab: %d iterations, residual %.2e", total, res.max())
    return X[:, 0] if vec else X


class Factorization:
    """Sparse LU factorization reused for many right-hand sides.

    With ``singular=True`` the matrix is taken to have the constants as its
    kernel.  The first unknown is then pinned to zero, right-hand sides are
    made compatible by removing their mean, and solutions are returned with
    zero mean, as in :func:`solve_spd`.
    """

    def __init__(self, A, singular=False):
        A = sp.csr_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ConfigError("factorization needs a square matrix")
        self.n = A.shape[0]
        self.singular = singular
        if singular:
            A = A[1:, 1:]
        try:
            self._lu = splu(A.tocsc())
        except RuntimeError as exc:
            raise ConvergenceError(f"sparse LU failed: {exc}", float("nan"), 0) from exc

    def solve(self, b):
        B, vec = _as_columns(b)
        if B.shape[0] != self.n:
            raise ConfigError(f"right-hand side has {B.shape[0]} rows, expected {self.n}")
        if self.singular:
            B -= B.mean(axis=0)
            X = np.zeros_like(B)
            X[1:] = self._lu.solve(B[1:])
            X -= X.mean(axis=0)
        else:
            X = self._lu.solve(B)
        if not np.all(np.isfinite(X)):
            raise ConvergenceError("sparse LU produced non-finite values", float("nan"), 0)
        return X[:, 0] if vec else X


def dense_solve(A, b):
    """Dense LU reference solve for small systems (test oracle only)."""
    if A.shape[0] > DENSE_LIMIT:
        raise ConfigError(f"dense fallback limited to {DENSE_LIMIT} unknowns")
    return np.linalg.solve(A.toarray() if sp.issparse(A) else np.asarray(A), b)
