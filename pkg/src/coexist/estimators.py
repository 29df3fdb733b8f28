"""Exponent fitting, exact enumeration oracles and limit-law self-consistency checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .branching import (_as_pair, _check_spec, annealed_curve, sample_offspring_totals)
from .curves import SurvivalCurve
from .env import ATOMS, EnvModelSpec, p_from_x, sample_steps
from .errors import DomainError, PreconditionError, StarvationError
from .harmonic import HarmonicApprox, HarmonicTable, htransform_sample, tabulate_V
from .streams import Stream, as_stream, block_sizes, map_blocks
from .walk import _check_interior, cone_geometry, exit_tail_curve

BRUTE_FORCE_MAX_N = 8
MIN_FIT_POINTS = 4
MIN_CONDITIONED_SAMPLES = 500


def theta_formula(rho: float) -> float:
    """Co-existence exponent ``pi / (2 arccos(-rho))`` for ``|rho| < 1``."""
    if not abs(rho) < 1.0:
        raise DomainError(f"theta(rho) is defined only for |rho| < 1, got {rho}")
    return math.pi / (2.0 * math.acos(-rho))


# -- power-law fits ----------------------------------------------------------

@dataclass
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    ci: tuple[float, float]
    n_range: tuple[int, int]
    points: int
    weights: np.ndarray
    dropped_zero: int = 0

    @property
    def amplitude(self) -> float:
        return math.exp(self.intercept)


def fit_power_law(curve: SurvivalCurve, n_min: int = 64, level: float = 0.95) -> ExponentFit:
    """Weighted least squares of ``log(estimate)`` on ``log(n)``.

    Weights are inverse squared relative standard errors (the delta-method
    variance of ``log(estimate)``); if any usable point has zero stderr the
    fit is unweighted.  The slope stderr is residual-scaled, so noiseless
    data give zero, and the interval uses Student t with ``k - 2`` degrees
    of freedom.
    """
    n = np.asarray(curve.n, dtype=float)
    est = np.asarray(curve.estimate, dtype=float)
    se = np.asarray(curve.stderr, dtype=float)
    in_range = n >= n_min
    usable = in_range & (est > 0)
    dropped = int(np.sum(in_range & ~(est > 0)))
    k = int(usable.sum())
    if k < MIN_FIT_POINTS:
        raise PreconditionError(
            f"power-law fit needs >= {MIN_FIT_POINTS} positive points with n >= {n_min}, got {k}")
    x = np.log(n[usable])
    y = np.log(est[usable])
    rel = se[usable] / est[usable]
    w = np.ones(k) if np.any(rel <= 0) else 1.0 / rel**2
    sw = w.sum()
    xb = np.dot(w, x) / sw
    yb = np.dot(w, y) / sw
    sxx = np.dot(w, (x - xb) ** 2)
    slope = float(np.dot(w, (x - xb) * (y - yb)) / sxx)
    intercept = float(yb - slope * xb)
    resid = y - (intercept + slope * x)
    s2 = float(np.dot(w, resid**2) / (k - 2))
    stderr = math.sqrt(s2 / sxx)
    half = float(stats.t.ppf(0.5 + level / 2.0, k - 2)) * stderr
    return ExponentFit(slope, intercept, stderr, (slope - half, slope + half),
                       (int(n[usable][0]), int(n[usable][-1])), k, w, dropped)


# -- exact enumeration -------------------------------------------------------

def _check_brute(spec: EnvModelSpec, n: int) -> None:
    if not spec.is_discrete:
        raise PreconditionError("exact enumeration needs the discrete four-point family")
    if not 0 <= n <= BRUTE_FORCE_MAX_N:
        raise PreconditionError(f"enumeration horizon must be in [0, {BRUTE_FORCE_MAX_N}]")


def _survival_exact(a: np.ndarray, z: int) -> np.ndarray:
    if z == 0:
        return np.zeros_like(a)
    return 1.0 - (a / (1.0 + a)) ** z


def _sequences(order, n):
    idx = np.array(list(itertools.product(order, repeat=n)), dtype=np.int64).reshape(-1, n)
    return idx


def _dfs(probs, n, visit, order):
    """Depth-first walk over step sequences, calling ``visit(prob, path)`` at leaves."""
    path = []

    def rec(prob):
        if len(path) == n:
            visit(prob, path)
            return
        for a in order:
            if probs[a] == 0.0:
                continue
            path.append(a)
            rec(prob * probs[a])
            path.pop()

    rec(1.0)


def brute_force_coexistence(spec: EnvModelSpec, z, n: int, order=(0, 1, 2, 3),
                            method: str = "product") -> float:
    """Exact ``P(Z_1(n) > 0, Z_2(n) > 0)`` by summing over all ``4^n`` environments.

    ``order`` permutes the atoms; ``method`` is ``"product"`` (vectorised
    Cartesian product) or ``"recursive"`` (depth-first accumulation).  All
    combinations agree up to rounding, which is how the oracle checks itself.
    """
    _check_brute(spec, n)
    z1, z2 = _as_pair(z)
    probs = spec.atom_probabilities()
    order = tuple(order)
    if sorted(order) != [0, 1, 2, 3]:
        raise PreconditionError("order must be a permutation of the four atoms")
    if n == 0:
        return float((z1 > 0) and (z2 > 0))
    if method == "product":
        idx = _sequences(order, n)
        weight = np.prod(probs[idx], axis=1)
        S = np.cumsum(ATOMS[idx], axis=1)
        A = np.exp(-S).sum(axis=1)
        y = _survival_exact(A[:, 0], z1) * _survival_exact(A[:, 1], z2)
        return float(np.dot(weight, y))
    if method == "recursive":
        total = [0.0]

        def visit(prob, path):
            s = np.zeros(2)
            a = np.zeros(2)
            for i in path:
                s = s + ATOMS[i]
                a = a + np.exp(-s)
            total[0] += prob * float(_survival_exact(a[:1], z1)[0] * _survival_exact(a[1:], z2)[0])

        _dfs(probs, n, visit, order)
        return total[0]
    raise PreconditionError(f"unknown enumeration method {method!r}")


def brute_force_exit(spec: EnvModelSpec, x, n: int, order=(0, 1, 2, 3),
                     method: str = "product") -> float:
    """Exact ``P(tau_x > n)`` for the discrete family by enumeration."""
    _check_brute(spec, n)
    x = _check_interior(x)
    probs = spec.atom_probabilities()
    if n == 0:
        return 1.0
    if method == "product":
        idx = _sequences(tuple(order), n)
        weight = np.prod(probs[idx], axis=1)
        pos = x + np.cumsum(ATOMS[idx], axis=1)
        inside = (pos.min(axis=2) > 0).all(axis=1)
        return float(np.dot(weight, inside))
    if method == "recursive":
        total = [0.0]

        def visit(prob, path):
            pos = x.copy()
            for i in path:
                pos = pos + ATOMS[i]
                if pos.min() <= 0:
                    return
            total[0] += prob

        _dfs(probs, n, visit, tuple(order))
        return total[0]
    raise PreconditionError(f"unknown enumeration method {method!r}")


def conditioned_endpoint_law(spec: EnvModelSpec, x, n: int) -> dict[tuple[float, float], float]:
    """Exact law of ``x + S(n)`` given ``tau_x > n`` (discrete family)."""
    _check_brute(spec, n)
    x = _check_interior(x)
    probs = spec.atom_probabilities()
    idx = _sequences((0, 1, 2, 3), n)
    weight = np.prod(probs[idx], axis=1)
    pos = x + np.cumsum(ATOMS[idx], axis=1)
    keep = (pos.min(axis=2) > 0).all(axis=1) & (weight > 0)
    law: dict[tuple[float, float], float] = {}
    for end, wt in zip(map(tuple, pos[keep, -1]), weight[keep]):
        law[end] = law.get(end, 0.0) + float(wt)
    total = sum(law.values())
    return {k: v / total for k, v in law.items()}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def weighted_law(points: np.ndarray, weights: np.ndarray) -> dict[tuple[float, float], float]:
    law: dict[tuple[float, float], float] = {}
    for pt, wt in zip(map(tuple, points), weights):
        law[pt] = law.get(pt, 0.0) + float(wt)
    return law


@dataclass
class OracleReport:
    exact: float
    estimate: float
    stderr: float

    @property
    def zscore(self) -> float:
        if self.stderr > 0:
            return (self.estimate - self.exact) / self.stderr
        return 0.0 if math.isclose(self.estimate, self.exact, abs_tol=1e-12) else math.copysign(1e9, self.estimate - self.exact)

    def within(self, n_sigma: float = 3.0) -> bool:
        return abs(self.zscore) <= n_sigma


def oracle_coexistence(spec: EnvModelSpec, z, n: int, replicas: int, stream: Stream | int,
                       workers: int = 1) -> list[OracleReport]:
    """Exact versus Monte Carlo co-existence probabilities for every horizon 1..n."""
    _check_brute(spec, n)
    curve = annealed_curve(spec, z, np.arange(1, n + 1), replicas, stream, workers=workers)
    return [OracleReport(brute_force_coexistence(spec, z, k), float(e), float(s))
            for k, e, s in zip(curve.n, curve.estimate, curve.stderr)]


def oracle_exit(spec: EnvModelSpec, x, n: int, replicas: int, stream: Stream | int,
                workers: int = 1) -> list[OracleReport]:
    _check_brute(spec, n)
    curve = exit_tail_curve(spec, x, np.arange(1, n + 1), replicas, stream, workers=workers)
    # a binomial estimate of exactly 0 or 1 has zero stderr; use one count as the floor
    floor = 1.0 / replicas
    return [OracleReport(brute_force_exit(spec, x, k), float(e), max(float(s), floor))
            for k, e, s in zip(curve.n, curve.estimate, curve.stderr)]


# -- meander self-consistency --------------------------------------------------

def ks_distance(a, b, wa=None, wb=None) -> float:
    """Two-sample Kolmogorov-Smirnov distance between (optionally weighted) samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    wa = np.ones_like(a) if wa is None else np.asarray(wa, dtype=float)
    wb = np.ones_like(b) if wb is None else np.asarray(wb, dtype=float)
    ia = np.argsort(a, kind="stable")
    ib = np.argsort(b, kind="stable")
    a, wa = a[ia], wa[ia]
    b, wb = b[ib], wb[ib]
    ca = np.concatenate(([0.0], np.cumsum(wa))) / wa.sum()
    cb = np.concatenate(([0.0], np.cumsum(wb))) / wb.sum()
    grid = np.concatenate((a, b))
    fa = ca[np.searchsorted(a, grid, side="right")]
    fb = cb[np.searchsorted(b, grid, side="right")]
    return float(np.max(np.abs(fa - fb)))


@dataclass
class ConditionedSample:
    """Scaled marginals ``(x + S(nt)) / sqrt(n)`` under the conditioned law."""

    horizon: int
    times: dict[float, np.ndarray]
    weights: np.ndarray

    @property
    def ess(self) -> float:
        w = self.weights / self.weights.sum()
        return float(1.0 / np.sum(w * w))


@dataclass
class MeanderReport:
    t: np.ndarray
    ks: np.ndarray  # (len(t), 3): first coordinate, second coordinate, radial part
    ess: tuple[float, float]
    horizons: tuple[int, int]
    samples: tuple[int, int]
    radial_small: tuple[float, float]  # weighted P(|M(1)| < 0.01) per horizon
    min_coordinate: float
    method: str = "htransform"

    @property
    def max_ks(self) -> float:
        return float(self.ks.max())


def _conditioned_walk(spec, x, t_grid, horizon, samples, stream, table) -> ConditionedSample:
    times = {t: int(round(t * horizon)) for t in t_grid}
    ens = htransform_sample(table, spec, x, horizon, samples, stream, record_times=times.values())
    scale = math.sqrt(horizon)
    return ConditionedSample(horizon, {t: ens.history[k] / scale for t, k in times.items()},
                             ens.conditioned_weights())


def _conditioned_branching(spec, z, t_grid, horizon, samples, stream, workers) -> ConditionedSample:
    """Environment paths weighted by their exact quenched co-existence probability."""
    z1, z2 = _as_pair(z)
    times = {t: int(round(t * horizon)) for t in t_grid}
    sizes = block_sizes(samples, 1024)
    grid = np.array([horizon])
    scale = math.sqrt(horizon)

    def run(b):
        steps = sample_steps(spec, (sizes[b], horizon), stream.child(b).generator())
        w = kernels.coexist_values(steps, z1, z2, True, True, grid)[:, 0]
        S = np.cumsum(steps, axis=1)
        return w, {t: (S[:, k - 1] if k > 0 else np.zeros((sizes[b], 2))) / scale
                   for t, k in times.items()}

    parts = map_blocks(run, len(sizes), workers)
    w = np.concatenate([p[0] for p in parts])
    return ConditionedSample(horizon, {t: np.concatenate([p[1][t] for p in parts]) for t in t_grid}, w)


def _radial(geom, pts):
    return np.linalg.norm(pts @ geom.T.T, axis=1) if geom is not None else np.linalg.norm(pts, axis=1)


def meander_consistency(spec: EnvModelSpec, x, t_grid, horizons, samples: int,
                        stream: Stream | int, method: str = "htransform", z=(1, 1),
                        approx: HarmonicApprox | HarmonicTable | None = None,
                        workers: int = 1) -> MeanderReport:
    """Compare scaled conditioned marginals at two horizons by KS distance.

    ``method="htransform"`` samples walks conditioned on ``tau_x > n`` with the
    particle sampler; ``method="branching"`` weights environment paths by the
    exact quenched co-existence probability (starting from the origin, so
    ``x`` is ignored).  Both coordinates and the radial part of the whitened
    position are compared at every ``t``.
    """
    n_a, n_b = (int(h) for h in horizons)
    t_grid = [float(t) for t in t_grid]
    stream = as_stream(stream, f"meander-{method}")
    geom = cone_geometry(spec.rho) if abs(spec.rho) < 1 else None
    if method == "htransform":
        if geom is None:
            raise DomainError("the h-transform sampler needs |rho| < 1")
        if approx is None:
            approx = HarmonicApprox(geom)
        table = approx if isinstance(approx, HarmonicTable) else tabulate_V(approx, spec, stream.child(-1))
        a = _conditioned_walk(spec, x, t_grid, n_a, samples, stream.child(0), table)
        b = a if n_b == n_a else _conditioned_walk(spec, x, t_grid, n_b, samples, stream.child(1), table)
    elif method == "branching":
        _check_spec(spec)
        a = _conditioned_branching(spec, z, t_grid, n_a, samples, stream.child(0), workers)
        b = a if n_b == n_a else _conditioned_branching(spec, z, t_grid, n_b, samples, stream.child(1), workers)
    else:
        raise PreconditionError(f"unknown meander method {method!r}")
    for s in (a, b):
        if s.ess < MIN_CONDITIONED_SAMPLES:
            hint = " (use method='htransform')" if method == "branching" else ""
            raise StarvationError(
                f"only {s.ess:.0f} effective conditioned samples at n={s.horizon}{hint}")

    ks = np.empty((len(t_grid), 3))
    for r, t in enumerate(t_grid):
        pa, pb = a.times[t], b.times[t]
        ks[r, 0] = ks_distance(pa[:, 0], pb[:, 0], a.weights, b.weights)
        ks[r, 1] = ks_distance(pa[:, 1], pb[:, 1], a.weights, b.weights)
        ks[r, 2] = ks_distance(_radial(geom, pa), _radial(geom, pb), a.weights, b.weights)
    t_last = max(t_grid)

    def small(s):
        w = s.weights / s.weights.sum()
        return float(np.sum(w[_radial(geom, s.times[t_last]) < 0.01]))

    min_coord = float(min(s.times[t].min() for s in (a, b) for t in t_grid if t > 0)) \
        if any(t > 0 for t in t_grid) else 0.0
    return MeanderReport(np.array(t_grid), ks, (a.ess, b.ess), (n_a, n_b),
                         (len(a.weights), len(b.weights)), (small(a), small(b)), min_coord, method)


# -- closeness of log Z and S -----------------------------------------------------

@dataclass
class ZSReport:
    n: int
    epsilon: float
    frequency: float
    stderr: float
    exceed: int
    cosurviving: int
    saturated: int
    runs: int
    limit_regime: int = 0

    @property
    def coexistence_estimate(self) -> float:
        return self.cosurviving / self.runs


ZS_BLOCK = 16384


def _zs_block(spec, z1, z2, n, size, threshold, rng):
    Z = np.empty((size, 2))
    Z[:, 0] = z1
    Z[:, 1] = z2
    S = np.zeros((size, 2))
    dev = np.abs(np.log(Z)).max(axis=1)
    limit = np.zeros(size, dtype=bool)
    alive = np.flatnonzero((Z > 0).all(axis=1))
    saturated = 0
    for _ in range(n):
        if not alive.size:
            break
        x = sample_steps(spec, (alive.size,), rng)
        S[alive] += x
        p = p_from_x(x)
        sat = np.zeros(alive.size, dtype=bool)
        for i in range(2):
            draw = sample_offspring_totals(Z[alive, i], p[:, i], rng)
            Z[alive, i] = draw.totals
            sat |= draw.saturated
            limit[alive] |= draw.limit
        saturated += int(np.sum(sat & (Z[alive] > 0).all(axis=1)))
        keep = (Z[alive] > 0).all(axis=1) & ~sat
        alive = alive[keep]
        if alive.size:
            d = np.abs(np.log(Z[alive]) - S[alive]).max(axis=1)
            dev[alive] = np.maximum(dev[alive], d)
    exceed = int(np.sum(dev[alive] >= threshold))
    return np.array([alive.size, exceed, saturated, int(limit[alive].sum())])


def zs_deviation(spec: EnvModelSpec, z, n: int, replicas: int, epsilon: float,
                 stream: Stream | int, workers: int = 1) -> ZSReport:
    """Frequency of ``max_k |log Z_i(k) - S_i(k)| >= epsilon sqrt(n)`` among co-surviving runs.

    The maximum runs over ``k <= n`` and both coordinates.  Runs whose
    population overflows while both types are alive are excluded and counted
    in ``saturated``; ``limit_regime`` counts co-surviving runs that needed
    the large-population offspring limit at some generation.
    """
    _check_spec(spec)
    if not 1 <= n <= 2048:
        raise PreconditionError("forward simulation is limited to 1 <= n <= 2048")
    z1, z2 = _as_pair(z)
    if min(z1, z2) < 1:
        raise PreconditionError("both initial populations must be positive")
    stream = as_stream(stream, "zs-deviation")
    threshold = epsilon * math.sqrt(n)
    sizes = block_sizes(replicas, ZS_BLOCK)
    parts = map_blocks(lambda b: _zs_block(spec, z1, z2, n, sizes[b], threshold,
                                           stream.child(b).generator()), len(sizes), workers)
    cos, exceed, sat, lim = (int(v) for v in np.sum(parts, axis=0))
    if cos == 0:
        err = StarvationError(f"no co-surviving runs out of {replicas} at n={n} ({sat} saturated)")
        err.coexistence_estimate = 0.0
        raise err
    f = exceed / cos
    return ZSReport(n, epsilon, f, math.sqrt(f * (1 - f) / cos), exceed, cos, sat, replicas, lim)
