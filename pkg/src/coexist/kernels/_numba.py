"""Numba kernels.  Signatures mirror :mod:`coexist.kernels._numpy` exactly."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def _survival(log_a, z):
    if z == 0:
        return 0.0
    q = math.log1p(math.exp(-log_a))
    return -math.expm1(-z * q)


@njit(**_OPTS)
def coexist_values(steps, z1, z2, use1, use2, grid):
    """Quenched survival functional at the grid times for every path.

    ``steps`` has shape (B, n, 2); ``grid`` holds 1-based times in
    increasing order.  Returns an array of shape (B, len(grid)).
    """
    n_paths = steps.shape[0]
    n_steps = steps.shape[1]
    n_grid = grid.shape[0]
    out = np.empty((n_paths, n_grid))
    for b in range(n_paths):
        s1 = 0.0
        s2 = 0.0
        # log A_i = m_i + log(acc_i), acc_i >= 1
        m1 = 0.0
        m2 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        g = 0
        for k in range(n_steps):
            s1 += steps[b, k, 0]
            s2 += steps[b, k, 1]
            v1 = -s1
            v2 = -s2
            if k == 0:
                m1 = v1
                acc1 = 1.0
                m2 = v2
                acc2 = 1.0
            else:
                if v1 <= m1:
                    acc1 += math.exp(v1 - m1)
                else:
                    acc1 = acc1 * math.exp(m1 - v1) + 1.0
                    m1 = v1
                if v2 <= m2:
                    acc2 += math.exp(v2 - m2)
                else:
                    acc2 = acc2 * math.exp(m2 - v2) + 1.0
                    m2 = v2
            while g < n_grid and grid[g] == k + 1:
                val = 1.0
                if use1:
                    val *= _survival(m1 + math.log(acc1), z1)
                if use2:
                    val *= _survival(m2 + math.log(acc2), z2)
                out[b, g] = val
                g += 1
            if g == n_grid:
                break
    return out


@njit(**_OPTS)
def exit_scan(pos, steps):
    """Advance positions through a chunk of steps, stopping at the first exit.

    Returns ``(offset, pos_out)`` where ``offset[b]`` is the 0-based step of
    exit within the chunk (``-1`` if the path stayed inside) and ``pos_out``
    the position at exit or at the end of the chunk.
    """
    n_paths = steps.shape[0]
    n_steps = steps.shape[1]
    offset = np.full(n_paths, -1, dtype=np.int64)
    pos_out = np.empty((n_paths, 2))
    for b in range(n_paths):
        p1 = pos[b, 0]
        p2 = pos[b, 1]
        for k in range(n_steps):
            p1 += steps[b, k, 0]
            p2 += steps[b, k, 1]
            if p1 <= 0.0 or p2 <= 0.0:
                offset[b] = k
                break
        pos_out[b, 0] = p1
        pos_out[b, 1] = p2
    return offset, pos_out


@njit(**_OPTS)
def _u_point(x1, x2, t00, t01, p, shift):
    a = x1 + shift
    c = x2 + shift
    y1 = t00 * a + t01 * c
    y2 = c
    r = math.hypot(y1, y2)
    if r == 0.0:
        return 0.0
    return r**p * math.sin(p * math.atan2(y2, y1))


@njit(**_OPTS)
def cone_u(points, t00, t01, p, shift):
    """``r**p * sin(p*alpha)`` of ``T(x + shift*(1,1))`` for each row of ``points``."""
    out = np.empty(points.shape[0])
    for j in range(points.shape[0]):
        out[j] = _u_point(points[j, 0], points[j, 1], t00, t01, p, shift)
    return out


@njit(**_OPTS)
def harmonic_extension(x, steps, t00, t01, p, shift):
    """Killed m-step extension: ``u(T(x + S(m) + shift)) * 1{tau_x > m}`` per path."""
    n_paths = steps.shape[0]
    depth = steps.shape[1]
    out = np.zeros(n_paths)
    for b in range(n_paths):
        p1 = x[0]
        p2 = x[1]
        alive = True
        for k in range(depth):
            p1 += steps[b, k, 0]
            p2 += steps[b, k, 1]
            if p1 <= 0.0 or p2 <= 0.0:
                alive = False
                break
        if alive:
            out[b] = _u_point(p1, p2, t00, t01, p, shift)
    return out


@njit(**_OPTS)
def _ratio(x1, x2, table, spacing):
    nx = table.shape[0]
    ny = table.shape[1]
    if nx == 0:
        return 1.0
    fx = min(max(x1 / spacing - 0.5, 0.0), nx - 1.0)
    fy = min(max(x2 / spacing - 0.5, 0.0), ny - 1.0)
    i = min(int(fx), nx - 2)
    j = min(int(fy), ny - 2)
    ax = fx - i
    ay = fy - j
    return ((1.0 - ax) * (1.0 - ay) * table[i, j] + ax * (1.0 - ay) * table[i + 1, j]
            + (1.0 - ax) * ay * table[i, j + 1] + ax * ay * table[i + 1, j + 1])


@njit(**_OPTS)
def harmonic_values(points, t00, t01, p, shift, table, spacing):
    """Surrogate harmonic function: tabulated correction times the shifted cone function."""
    out = np.empty(points.shape[0])
    for j in range(points.shape[0]):
        x1 = points[j, 0]
        x2 = points[j, 1]
        out[j] = _ratio(x1, x2, table, spacing) * _u_point(x1, x2, t00, t01, p, shift)
    return out


@njit(**_OPTS)
def sis_step(pos, vcur, weights, steps, t00, t01, p, shift, table, spacing):
    """One propagate/kill/reweight step of the h-transform sampler, in place."""
    for j in range(pos.shape[0]):
        if weights[j] == 0.0:
            continue
        x1 = pos[j, 0] + steps[j, 0]
        x2 = pos[j, 1] + steps[j, 1]
        pos[j, 0] = x1
        pos[j, 1] = x2
        if x1 <= 0.0 or x2 <= 0.0:
            weights[j] = 0.0
            vcur[j] = 0.0
            continue
        v = _ratio(x1, x2, table, spacing) * _u_point(x1, x2, t00, t01, p, shift)
        weights[j] = weights[j] * (v / vcur[j])
        vcur[j] = v


@njit(**_OPTS)
def systematic_resample(weights, u0):
    n = weights.shape[0]
    cum = np.cumsum(weights)
    total = cum[n - 1]
    idx = np.empty(n, dtype=np.int64)
    i = 0
    for j in range(n):
        target = (u0 + j) / n * total
        while i < n - 1 and cum[i] <= target:
            i += 1
        idx[j] = i
    return idx
