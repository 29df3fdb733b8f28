"""Two-type branching process with geometric offspring in a shared environment.

Given the environment, the two populations evolve independently and the
survival probability of each is explicit:

    P_z(Z_i(n) > 0 | env) = 1 - (A_i(n) / (1 + A_i(n)))^{z_i},
    A_i(n) = sum_{k=1..n} exp(-S_i(k)).

The leading ``1 +`` is the ``k = 0`` term ``exp(-S_i(0))`` of the generating
function identity, so both conventions agree.  ``A_i`` spans hundreds of
orders of magnitude along long paths and is therefore kept as ``log A_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .curves import MomentAccumulator, SurvivalCurve, merge_all
from .env import EnvModelSpec, EnvPath, p_from_x, sample_steps
from .errors import DomainError, PreconditionError
from .streams import Stream, as_stream, block_sizes, map_blocks
from .walk import WalkPath, _check_grid

ANNEALED_BLOCK = 1024
_DIRECT_SUM_MAX = 64
_POISSON_MEAN_CAP = 2.0**60
MODES = ("coexist", "single_1", "single_2")


@dataclass
class PopulationState:
    z: tuple[int, int]

    def __post_init__(self):
        z = tuple(int(v) for v in self.z)
        if len(z) != 2 or min(z) < 0:
            raise PreconditionError(f"population sizes must be two non-negative integers, got {self.z}")
        self.z = z


def _as_pair(z) -> tuple[int, int]:
    return z.z if isinstance(z, PopulationState) else PopulationState(tuple(z)).z


# -- quenched functional ---------------------------------------------------

@dataclass
class QuenchedAccumulator:
    """Streaming ``log A_i(n)`` for both coordinates.

    ``log_a`` starts at ``-inf`` (empty sum) and is non-decreasing in ``n``.
    """

    log_a: np.ndarray = field(default_factory=lambda: np.full(2, -np.inf))
    s: np.ndarray = field(default_factory=lambda: np.zeros(2))
    n: int = 0

    def push(self, x_step) -> "QuenchedAccumulator":
        self.s = self.s + np.asarray(x_step, dtype=float)
        self.log_a = np.logaddexp(self.log_a, -self.s)
        self.n += 1
        return self

    def extend(self, x_steps) -> "QuenchedAccumulator":
        for step in np.asarray(x_steps, dtype=float).reshape(-1, 2):
            self.push(step)
        return self

    @classmethod
    def from_walk(cls, walk: WalkPath, n: int | None = None) -> "QuenchedAccumulator":
        n = walk.n if n is None else n
        acc = cls()
        if n:
            log_a = np.logaddexp.reduce(-walk.S[1:n + 1], axis=0)
            acc = cls(log_a, walk.S[n].copy(), n)
        return acc

    def survival(self, z) -> np.ndarray:
        z1, z2 = _as_pair(z)
        return np.array([quenched_survival(self.log_a[0], z1),
                         quenched_survival(self.log_a[1], z2)])


def quenched_survival(log_a, z_i: int):
    """``1 - (A / (1 + A))^z`` from ``log A``, stable for any magnitude of ``A``.

    Accepts a :class:`QuenchedAccumulator` coordinate value or an array of
    ``log A`` values.
    """
    if z_i < 0:
        raise PreconditionError("z_i must be >= 0")
    log_a = np.asarray(log_a, dtype=float)
    if z_i == 0:
        out = np.zeros_like(log_a)
    else:
        with np.errstate(over="ignore"):
            q = np.log1p(np.exp(-log_a))  # -log(A / (1 + A))
        out = -np.expm1(-z_i * q)
    return float(out) if out.ndim == 0 else out


def coexistence_functional(walk: WalkPath, z, n_grid) -> np.ndarray:
    """Quenched co-existence probability ``Y(n)`` at each grid time, one pass."""
    z1, z2 = _as_pair(z)
    grid = _check_grid(n_grid)
    if grid[-1] > walk.n:
        raise PreconditionError(f"grid reaches n={grid[-1]} beyond walk length {walk.n}")
    steps = walk.env.x if walk.env is not None else np.diff(walk.S, axis=0)
    steps = np.ascontiguousarray(steps[None, : grid[-1], :], dtype=float)
    return kernels.coexist_values(steps, z1, z2, True, True, grid)[0]


# -- offspring and forward simulation ---------------------------------------

def sample_offspring_total(z: int, p: float, stream: Stream | int | np.random.Generator) -> int:
    """Total offspring of ``z`` individuals with geometric(p) laws on {0, 1, ...}."""
    rng = stream if isinstance(stream, np.random.Generator) else as_stream(stream, "offspring").generator()
    draw = sample_offspring_totals(np.array([z]), np.array([p]), rng)
    return int(draw.totals[0]) if draw.totals[0] < 2.0**63 else float(draw.totals[0])


@dataclass
class OffspringDraw:
    totals: np.ndarray  # float64, integer valued
    limit: np.ndarray  # drawn through the normal limit of the Poisson stage
    saturated: np.ndarray  # overflowed the float range


def sample_offspring_totals(z, p, rng: np.random.Generator) -> OffspringDraw:
    """Vectorised negative-binomial draws ``sum_{j<=z} Geom(p)``.

    Small ``z`` sums geometric variables directly; larger ``z`` uses the
    gamma-Poisson mixture.  Both are exact in distribution as long as the
    Poisson mean stays below ``2**60``.  Beyond that the Poisson stage is
    drawn from its normal limit (Kolmogorov error below 1e-9) and the entry
    is marked in ``limit``; results that overflow float64 are saturated.
    """
    z = np.asarray(z)
    p = np.broadcast_to(np.asarray(p, dtype=float), z.shape)
    if np.any(p <= 0.0) or np.any(p > 1.0):
        raise DomainError("geometric parameter must satisfy 0 < p <= 1")
    if np.any(z < 0):
        raise PreconditionError("population sizes must be >= 0")
    out = np.zeros(z.shape)
    limit = np.zeros(z.shape, dtype=bool)
    saturated = np.zeros(z.shape, dtype=bool)

    small = (z > 0) & (z <= _DIRECT_SUM_MAX)
    if small.any():
        counts = z[small].astype(np.int64)
        draws = rng.geometric(np.repeat(p[small], counts)) - 1
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        out[small] = np.add.reduceat(draws, starts)

    big = z > _DIRECT_SUM_MAX
    if big.any():
        pb = p[big]
        with np.errstate(over="ignore", invalid="ignore"):
            lam = rng.standard_gamma(z[big].astype(float)) * ((1.0 - pb) / pb)
        finite = np.isfinite(lam)
        large = finite & (lam > _POISSON_MEAN_CAP)
        exact = finite & ~large
        draws = np.full(lam.shape, np.inf)
        draws[exact] = rng.poisson(lam[exact])
        if large.any():
            ll = lam[large]
            draws[large] = np.rint(ll + np.sqrt(ll) * rng.standard_normal(ll.shape))
        out[big] = draws
        limit[big] = large
        saturated[big] = ~finite
    return OffspringDraw(out, limit, saturated)


@dataclass
class ForwardTrajectory:
    Z: np.ndarray  # (n + 1, 2) float64 holding integers
    saturated: np.ndarray  # (2,) bool; a saturated coordinate is frozen at inf
    limit: np.ndarray  # (2,) bool; some generation used the large-population limit

    @property
    def n(self) -> int:
        return self.Z.shape[0] - 1


def simulate_forward(z, env: EnvPath | np.ndarray, stream: Stream | int | np.random.Generator
                     ) -> ForwardTrajectory:
    rng = stream if isinstance(stream, np.random.Generator) else as_stream(stream, "forward").generator()
    x = env.x if isinstance(env, EnvPath) else np.asarray(env, dtype=float).reshape(-1, 2)
    run = simulate_forward_batch(z, x, 1, rng, keep_path=True)
    return ForwardTrajectory(run.path[0], run.saturated[0], run.limit[0])


@dataclass
class ForwardBatch:
    final: np.ndarray  # (R, 2)
    saturated: np.ndarray  # (R, 2)
    limit: np.ndarray  # (R, 2)
    path: np.ndarray | None = None


def simulate_forward_batch(z, x_steps, replicas: int, rng: np.random.Generator,
                           keep_path: bool = False):
    """Independent forward runs; ``x_steps`` is shared (n, 2) or per-run (R, n, 2).

    ``path`` in the result is (R, n + 1, 2) when ``keep_path`` is set.
    """
    z1, z2 = _as_pair(z)
    x_steps = np.asarray(x_steps, dtype=float)
    shared = x_steps.ndim == 2
    n = x_steps.shape[-2]
    if not shared and x_steps.shape[0] != replicas:
        raise PreconditionError("per-run environments must have one row per replica")
    Z = np.empty((replicas, 2))
    Z[:, 0] = z1
    Z[:, 1] = z2
    sat = np.zeros((replicas, 2), dtype=bool)
    lim = np.zeros((replicas, 2), dtype=bool)
    path = np.empty((replicas, n + 1, 2)) if keep_path else None
    if keep_path:
        path[:, 0] = Z
    p_all = p_from_x(x_steps)
    for k in range(n):
        for i in range(2):
            live = np.flatnonzero((Z[:, i] > 0) & ~sat[:, i])
            if live.size:
                p = p_all[k, i] if shared else p_all[live, k, i]
                draw = sample_offspring_totals(Z[live, i], p, rng)
                Z[live, i] = draw.totals
                sat[live, i] |= draw.saturated
                lim[live, i] |= draw.limit
        if keep_path:
            path[:, k + 1] = Z
    return ForwardBatch(Z, sat, lim, path)


# -- annealed curves ---------------------------------------------------------

def _check_spec(spec: EnvModelSpec) -> None:
    if spec.rho <= -1.0:
        raise DomainError("rho = -1 (asynchronous environment) is not supported by the estimators")


def annealed_curve(spec: EnvModelSpec, z, n_grid, replicas: int, stream: Stream | int,
                   mode: str = "coexist", workers: int = 1) -> SurvivalCurve:
    """Average of the exact quenched functional over independent environments.

    ``mode`` selects co-existence (both types alive) or survival of a single
    type.  Each replica contributes its whole grid from one environment path.
    """
    _check_spec(spec)
    if mode not in MODES:
        raise PreconditionError(f"mode must be one of {MODES}")
    if replicas < 1:
        raise PreconditionError("replicas must be >= 1")
    z1, z2 = _as_pair(z)
    grid = _check_grid(n_grid)
    stream = as_stream(stream, "annealed")  # shared by all modes: matched environments
    sizes = block_sizes(replicas, ANNEALED_BLOCK)
    n_max = int(grid[-1])
    use1 = mode in ("coexist", "single_1")
    use2 = mode in ("coexist", "single_2")

    def run(b: int) -> MomentAccumulator:
        rng = stream.child(b).generator()
        steps = sample_steps(spec, (sizes[b], n_max), rng)
        return MomentAccumulator.of(kernels.coexist_values(steps, z1, z2, use1, use2, grid))

    acc = merge_all(map_blocks(run, len(sizes), workers))
    return SurvivalCurve.from_accumulator(grid, acc, {
        "kind": mode, "rho": spec.rho, "family": spec.label(), "z": (z1, z2), "seed": stream.seed})


def forward_survival_frequencies(z, env: EnvPath | np.ndarray, replicas: int,
                                 stream: Stream | int) -> dict:
    """Forward Monte Carlo on one fixed environment versus the exact quenched formula."""
    x = env.x if isinstance(env, EnvPath) else np.asarray(env, dtype=float).reshape(-1, 2)
    rng = as_stream(stream, "forward-check").generator()
    run = simulate_forward_batch(z, x, replicas, rng)
    Z, sat = run.final, run.saturated
    acc = QuenchedAccumulator().extend(x)
    S = x.sum(axis=0)
    alive = Z > 0
    freq = alive.mean(axis=0)
    usable = ~sat.any(axis=1)
    zf = Z[usable]
    z1, z2 = _as_pair(z)
    return {
        "frequency": freq,
        "frequency_se": np.sqrt(freq * (1 - freq) / replicas),
        "exact": acc.survival(z),
        "mean": zf.mean(axis=0),
        "mean_se": zf.std(axis=0, ddof=1) / math.sqrt(max(zf.shape[0], 1)),
        "expected_mean": np.array([z1, z2]) * np.exp(S),
        "saturated": int((~usable).sum()),
    }
