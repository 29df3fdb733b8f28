"""Associated random walk, quadrant geometry and exit times.

The walk ``S(n) = X(1) + ... + X(n)`` lives in the plane; the quantity of
interest is how long ``x + S(k)`` stays in the open positive quadrant.
The linear map ``T`` whitens the steps and sends the quadrant onto a cone
of opening ``arccos(-rho)``.  On that cone ``u(y) = r^p sin(p*alpha)`` with
``p = pi / arccos(-rho)`` is the positive harmonic function vanishing on the
boundary, and ``P(tau_x > n)`` decays like ``n^(-p/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .curves import SurvivalCurve
from .env import EnvModelSpec, EnvPath, sample_steps
from .errors import DomainError, PreconditionError
from .streams import Stream, as_stream, block_sizes, map_blocks, ordered_sum

EXIT_BLOCK = 4096
_FIRST_CHUNK = 16
_MAX_CHUNK = 512


@dataclass(frozen=True)
class ConeGeometry:
    rho: float
    phi: float
    p: float
    theta: float
    T: np.ndarray
    T_inv: np.ndarray

    def to_white(self, x) -> np.ndarray:
        """Apply ``T`` to points given as (..., 2)."""
        return np.asarray(x, dtype=float) @ self.T.T

    def from_white(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) @ self.T_inv.T


def cone_geometry(rho: float) -> ConeGeometry:
    if not abs(rho) < 1.0:
        which = "rho = 1 (fully synchronous)" if rho >= 1 else "rho = -1 (asynchronous)"
        raise DomainError(f"cone geometry is undefined at the boundary case {which}; need |rho| < 1")
    s = math.sqrt(1.0 - rho * rho)
    T = np.array([[1.0 / s, -rho / s], [0.0, 1.0]])
    T_inv = np.array([[s, rho], [0.0, 1.0]])
    phi = math.acos(-rho)
    p = math.pi / phi
    return ConeGeometry(rho, phi, p, p / 2.0, T, T_inv)


@dataclass(frozen=True)
class WalkPath:
    S: np.ndarray  # (n + 1, 2), S[0] == 0
    env: EnvPath | None = None

    @property
    def n(self) -> int:
        return self.S.shape[0] - 1


def walk_from_env(path: EnvPath | np.ndarray) -> WalkPath:
    x = path.x if isinstance(path, EnvPath) else np.asarray(path, dtype=float).reshape(-1, 2)
    S = np.zeros((x.shape[0] + 1, 2))
    np.cumsum(x, axis=0, out=S[1:])
    return WalkPath(S, path if isinstance(path, EnvPath) else None)


@dataclass(frozen=True)
class ExitRecord:
    """Outcome of scanning one path for its first exit from the quadrant.

    ``tau`` is None when the path is censored, i.e. stayed inside for the
    whole horizon; callers must check ``censored`` before using ``tau``.
    """

    x: tuple[float, float]
    horizon: int
    tau: int | None

    @property
    def censored(self) -> bool:
        return self.tau is None

    def survived(self, n: int) -> bool:
        """Whether ``tau > n``; only defined for ``n <= horizon``."""
        if n > self.horizon:
            raise PreconditionError(f"n={n} beyond observed horizon {self.horizon}")
        return self.tau is None or self.tau > n


def _check_interior(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(2)
    if not (np.all(np.isfinite(x)) and x[0] > 0.0 and x[1] > 0.0):
        raise PreconditionError(f"start point {tuple(x)} is not inside the open quadrant")
    return x


def exit_time(x, walk: WalkPath) -> ExitRecord:
    x = _check_interior(x)
    pos = x + walk.S[1:]
    out = np.flatnonzero(pos.min(axis=1) <= 0.0)
    tau = int(out[0]) + 1 if out.size else None
    return ExitRecord((float(x[0]), float(x[1])), walk.n, tau)


def u_harmonic(geom: ConeGeometry, x) -> np.ndarray | float:
    """Harmonic function of the whitened cone evaluated at ``T x``.

    Angles are measured from ``T (1, 0)``, which lies on the positive first
    axis, so the quadrant maps to angles in ``[0, phi]``.
    """
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    out = kernels.cone_u(np.ascontiguousarray(pts), geom.T[0, 0], geom.T[0, 1], geom.p, 0.0)
    return float(out[0]) if scalar else out


def _exit_times_block(spec: EnvModelSpec, x: np.ndarray, n_max: int, size: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Exit times of ``size`` independent walks; ``n_max + 1`` marks censoring."""
    tau = np.full(size, n_max + 1, dtype=np.int64)
    pos = np.tile(x, (size, 1))
    alive = np.arange(size)
    t = 0
    chunk = _FIRST_CHUNK
    while alive.size and t < n_max:
        length = min(chunk, n_max - t)
        steps = sample_steps(spec, (alive.size, length), rng)
        offset, new_pos = kernels.exit_scan(np.ascontiguousarray(pos[alive]), steps)
        out = offset >= 0
        tau[alive[out]] = t + offset[out] + 1
        pos[alive] = new_pos
        alive = alive[~out]
        t += length
        chunk = min(2 * chunk, _MAX_CHUNK)
    return tau


def _check_grid(n_grid) -> np.ndarray:
    grid = np.asarray(n_grid, dtype=np.int64).reshape(-1)
    if grid.size == 0 or grid[0] < 1 or np.any(np.diff(grid) <= 0):
        raise PreconditionError("n_grid must be a non-empty strictly increasing list of times >= 1")
    return grid


def exit_tail_curve(spec: EnvModelSpec, x, n_grid, replicas: int, stream: Stream | int,
                    workers: int = 1) -> SurvivalCurve:
    """Monte Carlo estimate of ``P(tau_x > n)`` on a grid of times.

    Each walk is followed once up to its exit or the last grid time, so all
    grid points share the same replicas.  Paths are generated in chunks and
    exited walks are dropped, which keeps the cost near ``E[min(tau, n)]``.
    """
    x = _check_interior(x)
    grid = _check_grid(n_grid)
    if replicas < 1:
        raise PreconditionError("replicas must be >= 1")
    stream = as_stream(stream, "exit-tail")
    sizes = block_sizes(replicas, EXIT_BLOCK)
    n_max = int(grid[-1])

    def run(b: int) -> np.ndarray:
        tau = _exit_times_block(spec, x, n_max, sizes[b], stream.child(b).generator())
        return (tau[:, None] > grid[None, :]).sum(axis=0).astype(np.float64)

    counts = ordered_sum(map_blocks(run, len(sizes), workers))
    est = counts / replicas
    se = np.sqrt(est * (1.0 - est) / replicas)
    curve = SurvivalCurve(grid, est, se, replicas, {
        "kind": "exit-tail", "rho": spec.rho, "family": spec.label(),
        "x": (float(x[0]), float(x[1])), "seed": stream.seed})
    if replicas < 1000:
        curve.warnings.append(f"only {replicas} replicas (< 1000); binomial stderr is unreliable")
    return curve


def sample_exit_times(spec: EnvModelSpec, x, n_max: int, replicas: int,
                      stream: Stream | int) -> np.ndarray:
    """Raw exit times (``n_max + 1`` = censored) for diagnostics and oracles."""
    x = _check_interior(x)
    stream = as_stream(stream, "exit-times")
    sizes = block_sizes(replicas, EXIT_BLOCK)
    return np.concatenate([_exit_times_block(spec, x, n_max, s, stream.child(b).generator())
                           for b, s in enumerate(sizes)])
