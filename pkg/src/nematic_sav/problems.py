"""Initial data and default parameters of the three benchmark problems."""

from __future__ import annotations

import numpy as np

# name -> (domain, nu, lam, gamma, eps, T or None for t_final)
DEFAULTS = {
    "mms": dict(domain=(0.0, 1.0, 0.0, 1.0), nu=0.01, lam=0.1, gamma=1.0, eps=0.01, T=0.2),
    "smooth": dict(domain=(-1.0, 1.0, -1.0, 1.0), nu=0.1, lam=1.0, gamma=1.0, eps=0.2, T=None),
    "defects": dict(domain=(-1.0, 1.0, -1.0, 1.0), nu=1.0, lam=0.01, gamma=1.0, eps=0.05, T=None),
}

DEFECT_REG = 0.05


def smooth_director(x, y):
    """``(sin a, cos a)`` with ``a = 2π(cos x - sin y)``; unit length everywhere."""
    a = 2.0 * np.pi * (np.cos(x) - np.sin(y))
    return np.stack([np.sin(a), np.cos(a)])


def defect_director(x, y):
    """Regularized director with zeros at ``(±1/2, 0)``."""
    dx = x**2 + y**2 - 0.25
    dy = np.asarray(y, dtype=float) * np.ones_like(dx)
    r = np.sqrt(dx**2 + dy**2 + DEFECT_REG**2)
    return np.stack([dx / r, dy / r])


def zero_velocity(x, y):
    return np.zeros((2,) + np.shape(x))


def initial_fields(example, disc, t0=0.0):
    """Nodal ``(d0, u0)`` on the P2 nodes of ``disc``."""
    x, y = disc.V.node_coords[:, 0], disc.V.node_coords[:, 1]
    if example == "smooth":
        return smooth_director(x, y), zero_velocity(x, y)
    if example == "defects":
        return defect_director(x, y), zero_velocity(x, y)
    if example == "mms":
        from .mms import exact_solution

        d, u, _p = exact_solution(t0, x, y)
        u = u.copy()
        u[:, disc.V.boundary] = 0.0
        return d, u
    raise ValueError(f"unknown example {example!r}")
