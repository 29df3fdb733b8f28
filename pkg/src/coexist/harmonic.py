"""Harmonic function surrogate, Doob h-transform sampler and repulsion diagnostics.

The harmonic function V of the walk killed on leaving the quadrant has no
closed form.  It is approximated by the m-step killed extension of the
Brownian harmonic function of the whitened cone, shifted inward by R:

    V_hat(x) = E[u(T(x + S(m) + R*(1,1))); tau_x > m].

The sampler propagates particles with the unconditioned step law, kills
those that leave the quadrant and multiplies the survivors' weights by
``V_hat(new) / V_hat(old)``.  The weights telescope, so after n steps a
particle carries ``V_hat(x + S(n)) / V_hat(x)`` relative to plain sampling,
i.e. the ensemble targets the h-transformed law.  Dividing by the terminal
``V_hat`` recovers the law conditioned on ``tau_x > n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .env import EnvModelSpec, sample_steps
from .errors import PreconditionError, WeightUnderflowError
from .streams import Stream, as_stream, block_sizes
from .walk import ConeGeometry, _check_interior

V_BLOCK = 4096
_RATIO_FLOOR = 1e-3


@dataclass(frozen=True)
class HarmonicApprox:
    geometry: ConeGeometry
    offset: float = 2.0
    depth: int = 64
    replicas: int = 4096

    def __post_init__(self):
        if self.offset < 0 or self.depth < 0 or self.replicas < 1:
            raise PreconditionError("offset and depth must be >= 0, replicas >= 1")

    def _coeffs(self):
        g = self.geometry
        return g.T[0, 0], g.T[0, 1], g.p, float(self.offset)

    def surrogate(self, x) -> np.ndarray:
        """``u(T(x + R x0))``, the depth-0 approximation."""
        pts = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, 2))
        return kernels.cone_u(pts, *self._coeffs())


@dataclass
class VEstimate:
    value: float
    stderr: float
    replicas: int
    starved: bool = False


def estimate_V(approx: HarmonicApprox, spec: EnvModelSpec, x, stream: Stream | int) -> VEstimate:
    """Monte Carlo value of the m-step harmonic extension at ``x``."""
    x = _check_interior(x)
    base = float(approx.surrogate(x)[0])
    if not base > 0.0:
        raise PreconditionError("surrogate vanishes at x; increase the offset")
    if approx.depth == 0:
        return VEstimate(base, 0.0, 0)
    stream = as_stream(stream, "estimate-V")
    vals = np.concatenate([
        kernels.harmonic_extension(x, sample_steps(spec, (size, approx.depth), stream.child(b).generator()),
                                   *approx._coeffs())
        for b, size in enumerate(block_sizes(approx.replicas, V_BLOCK))])
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return VEstimate(float(vals.mean()), se, vals.size, starved=not np.any(vals > 0.0))


@dataclass(frozen=True)
class HarmonicTable:
    """Surrogate ``V_hat`` as a tabulated correction times ``u(T(x + R x0))``.

    ``ratio[i, j]`` is ``V_hat / u`` at the node ``((i + 1/2) h, (j + 1/2) h)``;
    bilinear interpolation inside the table, clamped outside.
    """

    approx: HarmonicApprox
    ratio: np.ndarray
    spacing: float

    @classmethod
    def closed_form(cls, approx: HarmonicApprox) -> "HarmonicTable":
        return cls(approx, np.zeros((0, 0)), 1.0)

    def __call__(self, x) -> np.ndarray:
        pts = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, 2))
        return kernels.harmonic_values(pts, *self.approx._coeffs(), self.ratio, self.spacing)

    def kernel_args(self):
        return (*self.approx._coeffs(), self.ratio, self.spacing)


def tabulate_V(approx: HarmonicApprox, spec: EnvModelSpec, stream: Stream | int,
               extent: float = 16.0, spacing: float = 1.0) -> HarmonicTable:
    """Tabulate ``V_hat`` with common random numbers across nodes.

    Depth 0 needs no table.  Ratios are floored at a small positive value so
    the sampler's weights stay finite where the estimate starved.
    """
    if approx.depth == 0:
        return HarmonicTable.closed_form(approx)
    k = max(2, int(round(extent / spacing)))
    nodes = (np.arange(k) + 0.5) * spacing
    stream = as_stream(stream, "tabulate-V")
    steps = sample_steps(spec, (approx.replicas, approx.depth), stream.generator())
    ratio = np.empty((k, k))
    for i, a in enumerate(nodes):
        for j, b in enumerate(nodes):
            x = np.array([a, b])
            v = kernels.harmonic_extension(x, steps, *approx._coeffs()).mean()
            ratio[i, j] = v / approx.surrogate(x)[0]
    return HarmonicTable(approx, np.maximum(ratio, _RATIO_FLOOR), float(spacing))


@dataclass
class ParticleEnsemble:
    """Weighted particles approximating the h-transformed law after ``step`` steps.

    ``weights`` sum to one and target the h-transform; ``conditioned_weights``
    re-targets the law conditioned on survival up to ``step``.
    """

    x: np.ndarray
    positions: np.ndarray
    weights: np.ndarray
    v: np.ndarray
    v0: float
    step: int
    log_norm: float
    resamples: int = 0
    history: dict[int, np.ndarray] = field(default_factory=dict)
    checkpoints: dict[int, "ParticleEnsemble"] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def conditioned_weights(self) -> np.ndarray:
        w = self.weights / self.v
        return w / w.sum()

    def conditioned_ess(self) -> float:
        return float(1.0 / np.sum(self.conditioned_weights() ** 2))

    def survival_estimate(self) -> float:
        """Estimate of ``P(tau_x > step)`` from the normalising constant."""
        return float(math.exp(self.log_norm) * np.sum(self.weights * (self.v0 / self.v)))


def _compact(pos, w, v, history, x, v0, k, log_norm, resamples) -> ParticleEnsemble:
    live = w > 0.0
    wl = w[live]
    return ParticleEnsemble(x.copy(), pos[live].copy(), wl / wl.sum(), v[live].copy(), v0, k,
                            log_norm, resamples, {t: h[live].copy() for t, h in history.items()})


def htransform_sample(approx: HarmonicApprox | HarmonicTable, spec: EnvModelSpec, x, n: int,
                      N: int, stream: Stream | int, record_times=(), checkpoints=(),
                      threshold: float = 0.5) -> ParticleEnsemble:
    """Sequential importance sampler for walks conditioned to stay in the quadrant.

    Parameters
    ----------
    approx : HarmonicApprox or HarmonicTable
        Weight function.  A bare approximation with ``depth > 0`` is
        tabulated first (from a child of ``stream``).
    record_times : iterable of int
        Times whose positions are kept per particle, following resampling
        genealogies, in ``ensemble.history``.
    checkpoints : iterable of int
        Times at which a copy of the whole ensemble is stored in
        ``ensemble.checkpoints``.
    threshold : float
        Resample (systematically) when ESS drops below ``threshold * N``.
    """
    x = _check_interior(x)
    if N < 100:
        raise PreconditionError("need at least 100 particles")
    if n < 0:
        raise PreconditionError("horizon must be >= 0")
    stream = as_stream(stream, "htransform")
    table = approx if isinstance(approx, HarmonicTable) else tabulate_V(approx, spec, stream.child(-1))
    kargs = table.kernel_args()
    rng = stream.generator()

    record = set(int(t) for t in record_times)
    marks = set(int(t) for t in checkpoints)
    pos = np.tile(x, (N, 1))
    v = table(pos)
    v0 = float(v[0])
    if not v0 > 0.0:
        raise PreconditionError("harmonic surrogate vanishes at the start point")
    w = np.full(N, 1.0 / N)
    log_norm = 0.0
    resamples = 0
    history = {0: pos.copy()} if 0 in record else {}
    saved = {}
    for k in range(1, n + 1):
        kernels.sis_step(pos, v, w, sample_steps(spec, (N,), rng), *kargs)
        total = w.sum()
        if not (total > 0.0 and math.isfinite(total)):
            raise WeightUnderflowError(
                f"all particle weights vanished at step {k} of {n} (N={N}, start={tuple(x)})")
        log_norm += math.log(total)
        w /= total
        if k in record:
            history[k] = pos.copy()
        if k in marks:
            saved[k] = _compact(pos, w, v, history, x, v0, k, log_norm, resamples)
        if k < n and 1.0 / np.sum(w * w) < threshold * N:
            idx = kernels.systematic_resample(w, rng.random())
            dead = w[idx] == 0.0
            if dead.any():  # rounding at the top of the cumulative sum
                idx[dead] = np.flatnonzero(w > 0.0)[-1]
            pos = pos[idx]
            v = v[idx]
            w = np.full(N, 1.0 / N)
            history = {t: h[idx] for t, h in history.items()}
            resamples += 1
    out = _compact(pos, w, v, history, x, v0, n, log_norm, resamples)
    out.checkpoints = saved
    return out


# -- entropic repulsion ------------------------------------------------------

@dataclass
class RepulsionReport:
    n: np.ndarray
    fraction: np.ndarray
    stderr: np.ndarray
    particles: np.ndarray

    def rows(self):
        return [(int(a), float(b), float(c), int(d))
                for a, b, c, d in zip(self.n, self.fraction, self.stderr, self.particles)]


def _near_boundary(positions: np.ndarray, n: int) -> np.ndarray:
    return positions.min(axis=1) <= math.log(n) ** 2


def repulsion_report(ensembles) -> RepulsionReport:
    """Weighted fraction of conditioned paths whose smaller coordinate is <= log^2 n.

    ``ensembles`` maps each horizon n to a :class:`ParticleEnsemble` at step n
    (or is an ensemble whose ``checkpoints`` hold them).  The standard error
    uses the effective sample size of the weights.
    """
    if isinstance(ensembles, ParticleEnsemble):
        ensembles = {**ensembles.checkpoints, ensembles.step: ensembles}
    rows = []
    for n in sorted(ensembles):
        ens = ensembles[n]
        if ens.step != n:
            raise PreconditionError(f"ensemble for n={n} is at step {ens.step}")
        f = float(np.sum(ens.weights[_near_boundary(ens.positions, n)]))
        rows.append((n, f, math.sqrt(f * (1.0 - f) / ens.ess), len(ens)))
    a = np.array(rows, dtype=float)
    return RepulsionReport(a[:, 0].astype(np.int64), a[:, 1], a[:, 2], a[:, 3].astype(np.int64))


def terminal_positions(spec: EnvModelSpec, x, n: int, replicas: int, stream: Stream | int,
                       chunk: int = 256) -> np.ndarray:
    """End points ``x + S(n)`` of unconditioned walks (no killing, no weights)."""
    x = np.asarray(x, dtype=float).reshape(2)
    stream = as_stream(stream, "terminal")
    out = []
    for b, size in enumerate(block_sizes(replicas, V_BLOCK)):
        rng = stream.child(b).generator()
        pos = np.tile(x, (size, 1))
        t = 0
        while t < n:
            length = min(chunk, n - t)
            pos = pos + sample_steps(spec, (size, length), rng).sum(axis=1)
            t += length
        out.append(pos)
    return np.concatenate(out)


def unconditioned_repulsion(spec: EnvModelSpec, x, n_grid, replicas: int,
                            stream: Stream | int) -> RepulsionReport:
    """The same fraction for plain walks; exits count as near the boundary."""
    stream = as_stream(stream, "repulsion-plain")
    rows = []
    for n in n_grid:
        end = terminal_positions(spec, x, int(n), replicas, stream.child(int(n)))
        f = float(_near_boundary(end, int(n)).mean())
        rows.append((int(n), f, math.sqrt(f * (1 - f) / replicas), replicas))
    a = np.array(rows, dtype=float)
    return RepulsionReport(a[:, 0].astype(np.int64), a[:, 1], a[:, 2], a[:, 3].astype(np.int64))


def fixed_point_residual(approx: HarmonicApprox, spec: EnvModelSpec, x, replicas: int,
                         stream: Stream | int) -> tuple[float, float]:
    """One-step harmonicity check ``V_hat(x) - E[V_hat(x + X); x + X inside]``.

    With common random numbers the right-hand side is the depth ``m + 1``
    extension along the same paths, so the residual is a per-path difference.
    Returns the residual and its standard error.
    """
    x = _check_interior(x)
    m = approx.depth
    steps = sample_steps(spec, (replicas, m + 1), as_stream(stream, "fixed-point").generator())
    here = kernels.harmonic_extension(x, np.ascontiguousarray(steps[:, :m]), *approx._coeffs())
    after = kernels.harmonic_extension(x, steps, *approx._coeffs())
    d = here - after
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(replicas))


def with_depth(approx: HarmonicApprox, depth: int) -> HarmonicApprox:
    return replace(approx, depth=depth)
