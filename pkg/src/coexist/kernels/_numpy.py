"""Pure-numpy fallbacks for the numba kernels (same signatures, same results
up to last-bit rounding in transcendental functions)."""
from __future__ import annotations

import numpy as np


def _survival(log_a, z):
    if z == 0:
        return np.zeros_like(log_a)
    with np.errstate(over="ignore"):
        q = np.log1p(np.exp(-log_a))
    return -np.expm1(-z * q)


def coexist_values(steps, z1, z2, use1, use2, grid):
    n_max = int(grid[-1])
    s = np.cumsum(steps[:, :n_max, :], axis=1)
    log_a = np.logaddexp.accumulate(-s, axis=1)
    cols = np.asarray(grid, dtype=np.int64) - 1
    out = np.ones((steps.shape[0], cols.shape[0]))
    if use1:
        out *= _survival(log_a[:, cols, 0], z1)
    if use2:
        out *= _survival(log_a[:, cols, 1], z2)
    return out


def exit_scan(pos, steps):
    n_paths, n_steps = steps.shape[0], steps.shape[1]
    path = np.cumsum(np.concatenate([pos[:, None, :], steps], axis=1), axis=1)[:, 1:, :]
    out = path.min(axis=2) <= 0.0
    exited = out.any(axis=1)
    first = np.argmax(out, axis=1)
    offset = np.where(exited, first, -1).astype(np.int64)
    last = np.where(exited, first, n_steps - 1)
    pos_out = path[np.arange(n_paths), last, :].copy()
    return offset, pos_out


def _u_xy(x1, x2, t00, t01, p, shift):
    a = x1 + shift
    c = x2 + shift
    y1 = t00 * a + t01 * c
    y2 = c
    r = np.hypot(y1, y2)
    return np.where(r == 0.0, 0.0, r**p * np.sin(p * np.arctan2(y2, y1)))


def cone_u(points, t00, t01, p, shift):
    return _u_xy(points[:, 0], points[:, 1], t00, t01, p, shift)


def harmonic_extension(x, steps, t00, t01, p, shift):
    path = np.cumsum(np.concatenate(
        [np.broadcast_to(np.asarray(x, float), (steps.shape[0], 1, 2)), steps], axis=1), axis=1)
    alive = (path[:, 1:, :].min(axis=2) > 0.0).all(axis=1)
    end = path[:, -1, :]
    return np.where(alive, _u_xy(end[:, 0], end[:, 1], t00, t01, p, shift), 0.0)


def _ratio(x1, x2, table, spacing):
    nx, ny = table.shape
    if nx == 0:
        return np.ones_like(x1)
    fx = np.clip(x1 / spacing - 0.5, 0.0, nx - 1.0)
    fy = np.clip(x2 / spacing - 0.5, 0.0, ny - 1.0)
    i = np.minimum(fx.astype(np.int64), nx - 2)
    j = np.minimum(fy.astype(np.int64), ny - 2)
    ax = fx - i
    ay = fy - j
    return ((1.0 - ax) * (1.0 - ay) * table[i, j] + ax * (1.0 - ay) * table[i + 1, j]
            + (1.0 - ax) * ay * table[i, j + 1] + ax * ay * table[i + 1, j + 1])


def harmonic_values(points, t00, t01, p, shift, table, spacing):
    x1, x2 = points[:, 0], points[:, 1]
    return _ratio(x1, x2, table, spacing) * _u_xy(x1, x2, t00, t01, p, shift)


def sis_step(pos, vcur, weights, steps, t00, t01, p, shift, table, spacing):
    live = weights != 0.0
    new = pos[live] + steps[live]
    pos[live] = new
    inside = (new[:, 0] > 0.0) & (new[:, 1] > 0.0)
    v = np.zeros(new.shape[0])
    v[inside] = harmonic_values(new[inside], t00, t01, p, shift, table, spacing)
    w = weights[live]
    w = np.where(inside, w * (v / np.where(inside, vcur[live], 1.0)), 0.0)
    weights[live] = w
    vcur[live] = v


def systematic_resample(weights, u0):
    n = weights.shape[0]
    cum = np.cumsum(weights)
    targets = (u0 + np.arange(n)) / n * cum[-1]
    return np.minimum(np.searchsorted(cum, targets, side="right"), n - 1).astype(np.int64)
