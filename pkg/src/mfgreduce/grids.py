"""Uniform-grid interpolation and finite differences shared by the grid solvers.

All interpolators are vectorized over flat point arrays.  Out-of-range points
are extrapolated with the edge stencil and flagged; flags propagate through
the stencil so downstream tests can restrict to uninfluenced interior nodes.
"""

from __future__ import annotations

import numpy as np


def cubic_interp_1d(values, x0, dx, pts, flags=None):
    """4-point Lagrange interpolation on a uniform grid.

    values: (n,) or (n, C); pts: (P,).  Returns (vals, touched) where touched
    marks points whose stencil left the grid or touched a flagged node.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    s = (np.asarray(pts, dtype=float) - x0) / dx
    outside = (s < 0.0) | (s > n - 1)
    j = np.clip(np.floor(s).astype(int), 1, n - 3)
    th = s - j
    w0 = -th * (th - 1) * (th - 2) / 6.0
    w1 = (th + 1) * (th - 1) * (th - 2) / 2.0
    w2 = -(th + 1) * th * (th - 2) / 2.0
    w3 = (th + 1) * th * (th - 1) / 6.0
    if values.ndim == 2:
        w0, w1, w2, w3 = (w[:, None] for w in (w0, w1, w2, w3))
    out = w0 * values[j - 1] + w1 * values[j] + w2 * values[j + 1] + w3 * values[j + 2]
    touched = outside.copy()
    if flags is not None:
        touched |= flags[j - 1] | flags[j] | flags[j + 1] | flags[j + 2]
    return out, touched


def linear_interp_1d(values, x0, dx, pts, flags=None):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    s = (np.asarray(pts, dtype=float) - x0) / dx
    outside = (s < 0.0) | (s > n - 1)
    j = np.clip(np.floor(s).astype(int), 0, n - 2)
    th = s - j
    if values.ndim == 2:
        th = th[:, None]
    out = (1 - th) * values[j] + th * values[j + 1]
    touched = outside.copy()
    if flags is not None:
        touched |= flags[j] | flags[j + 1]
    return out, touched


def gradient_1d(u, dx):
    """Second-order gradient: central interior, one-sided 3-point at the ends."""
    u = np.asarray(u, dtype=float)
    g = np.empty_like(u)
    g[1:-1] = (u[2:] - u[:-2]) / (2 * dx)
    g[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * dx)
    g[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * dx)
    return g


def second_diff_1d(u, dx):
    u = np.asarray(u, dtype=float)
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx**2
    d[0] = d[1]
    d[-1] = d[-2]
    return d


def multilinear_nd(values, lo, h, pts, flags=None):
    """Multilinear interpolation on a uniform N-d grid, N <= 3.

    values: grid_shape + (C,) array; pts: (P, N).  Out-of-box points clamp to
    the boundary cell (gradient extrapolation is the caller's concern) and are
    flagged together with points whose cell touches a flagged node.
    """
    values = np.asarray(values, dtype=float)
    pts = np.asarray(pts, dtype=float)
    N = pts.shape[1]
    shape = values.shape[:N]
    s = (pts - lo) / h
    outside = np.zeros(len(pts), dtype=bool)
    idx = []
    frac = []
    for ax in range(N):
        outside |= (s[:, ax] < 0.0) | (s[:, ax] > shape[ax] - 1)
        j = np.clip(np.floor(s[:, ax]).astype(int), 0, shape[ax] - 2)
        idx.append(j)
        frac.append(np.clip(s[:, ax] - j, 0.0, 1.0))
    out = 0.0
    touched = outside.copy()
    for corner in range(2**N):
        w = np.ones(len(pts))
        sel = []
        for ax in range(N):
            bit = (corner >> ax) & 1
            w = w * (frac[ax] if bit else 1.0 - frac[ax])
            sel.append(idx[ax] + bit)
        vals = values[tuple(sel)]
        out = out + w[:, None] * vals
        if flags is not None:
            touched |= flags[tuple(sel)]
    return out, touched
