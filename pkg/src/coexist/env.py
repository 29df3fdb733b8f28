"""Environment families for the pair of geometric offspring laws.

An environment step is the pair of log conditional means
``X_i = log((1 - p_i) / p_i)`` of two geometric laws ``q_i(j) = p_i (1-p_i)^j``.
Two concrete families are provided, both with ``E X_i = 0``,
``E X_i^2 = 1`` and ``E X_1 X_2 = rho``:

* ``GAUSSIAN_SIGMOID``: ``X`` bivariate standard normal with correlation rho.
* ``DISCRETE_FOUR_POINT``: ``X`` on the four atoms ``(+-1, +-1)``, small
  enough to enumerate exactly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError
from .streams import Stream, as_stream


class Family(str, enum.Enum):
    GAUSSIAN_SIGMOID = "gaussian"
    DISCRETE_FOUR_POINT = "discrete"


# atom order is part of the sampling contract (index -> atom)
ATOMS = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])


@dataclass(frozen=True)
class EnvModelSpec:
    family: Family
    rho: float

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0 or math.isnan(self.rho):
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")
        object.__setattr__(self, "family", Family(self.family))

    @property
    def degenerate(self) -> bool:
        """True at rho = +-1, where the two coordinates are perfectly dependent."""
        return abs(self.rho) == 1.0

    @property
    def is_discrete(self) -> bool:
        return self.family is Family.DISCRETE_FOUR_POINT

    def atom_probabilities(self) -> np.ndarray:
        if not self.is_discrete:
            raise PreconditionError("atom probabilities exist only for the discrete family")
        same = (1.0 + self.rho) / 4.0
        diff = (1.0 - self.rho) / 4.0
        return np.array([same, same, diff, diff])

    def label(self) -> str:
        return self.family.value


def make_gaussian_env(rho: float) -> EnvModelSpec:
    return EnvModelSpec(Family.GAUSSIAN_SIGMOID, float(rho))


def make_discrete_env(rho: float) -> EnvModelSpec:
    return EnvModelSpec(Family.DISCRETE_FOUR_POINT, float(rho))


def make_env(family: str | Family, rho: float) -> EnvModelSpec:
    return EnvModelSpec(Family(family), float(rho))


def p_from_x(x):
    """Geometric success parameter from the log mean, ``p = 1 / (1 + e^x)``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(x))


def x_from_p(p):
    p = np.asarray(p, dtype=float)
    return np.log1p(-p) - np.log(p)


def sample_steps(spec: EnvModelSpec, size, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. log-mean pairs; returns an array of shape ``(*size, 2)``."""
    size = (size,) if np.isscalar(size) else tuple(size)
    if spec.is_discrete:
        cum = np.cumsum(spec.atom_probabilities())
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return ATOMS[np.minimum(idx, 3)]
    g = rng.standard_normal(size + (2,))
    rho = spec.rho
    out = np.empty_like(g)
    out[..., 0] = g[..., 0]
    out[..., 1] = rho * g[..., 0] + math.sqrt(1.0 - rho * rho) * g[..., 1]
    return out


@dataclass(frozen=True)
class EnvPath:
    """A finite environment sequence together with where it came from."""

    spec: EnvModelSpec
    x: np.ndarray  # (n, 2) log conditional means
    provenance: dict = field(default_factory=dict)

    @property
    def p(self) -> np.ndarray:
        return p_from_x(self.x)

    def __len__(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_steps(cls, spec: EnvModelSpec, x) -> "EnvPath":
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        return cls(spec, x, {"source": "explicit"})


def sample_env_path(spec: EnvModelSpec, n: int, stream: Stream | int) -> EnvPath:
    if n < 1:
        raise PreconditionError(f"horizon must be >= 1, got {n}")
    stream = as_stream(stream, "env")
    x = sample_steps(spec, (n,), stream.generator())
    return EnvPath(spec, x, {"seed": stream.seed, "tag": stream.tag,
                             "path": list(stream.path), "n": n})


@dataclass
class MomentReport:
    n_draws: int
    mean: np.ndarray
    mean_se: np.ndarray
    var: np.ndarray
    var_se: np.ndarray
    corr: float
    corr_se: float
    target_rho: float
    flagged: list[str]

    @property
    def ok(self) -> bool:
        return not self.flagged


def env_moment_report(spec: EnvModelSpec, n_draws: int, stream: Stream | int,
                      n_sigma: float = 4.0) -> MomentReport:
    """Empirical mean, variance and correlation of the environment with standard errors.

    Any moment further than ``n_sigma`` standard errors from its target
    ``(0, 1, rho)`` is listed in ``flagged``.
    """
    if n_draws < 1000:
        raise PreconditionError("moment report needs at least 1000 draws")
    stream = as_stream(stream, "moments")
    x = sample_steps(spec, (n_draws,), stream.generator())
    n = float(n_draws)
    mean = np.array([x[:, i].mean() for i in range(2)])
    c = x - mean
    # column-wise 1-D reductions keep summation order identical to the covariance
    var = np.array([(c[:, i] * c[:, i]).mean() for i in range(2)])
    m4 = np.array([(c[:, i] ** 4).mean() for i in range(2)])
    mean_se = np.sqrt(var / n)
    var_se = np.sqrt(np.maximum(m4 - var**2, 0.0) / n)
    cov = (c[:, 0] * c[:, 1]).mean()
    corr = float(cov / math.sqrt(var[0] * var[1]))
    u = c[:, 0] / math.sqrt(var[0])
    v = c[:, 1] / math.sqrt(var[1])
    influence = u * v - corr * (u * u + v * v) / 2.0
    corr_se = float(influence.std() / math.sqrt(n))

    flagged = []
    for i in range(2):
        if abs(mean[i]) > n_sigma * mean_se[i]:
            flagged.append(f"mean[{i}]")
        if abs(var[i] - 1.0) > n_sigma * var_se[i]:
            flagged.append(f"var[{i}]")
    if abs(corr - spec.rho) > n_sigma * corr_se:
        flagged.append("corr")
    return MomentReport(n_draws, mean, mean_se, var, var_se, corr, corr_se, spec.rho, flagged)
