"""Command-line front end.

Every command resolves a :class:`RunConfig` (built-in defaults, then an
optional JSON config file, then flags), validates it without sampling,
runs, and writes a CSV plus a JSON manifest into the output directory.
A manifest can be fed back through ``--config`` to reproduce the run.

Exit status: 0 success, 2 configuration error, 3 runtime failure
(starvation, weight underflow, unwritable output directory).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path


from . import __version__, artifacts
from .env import Family, make_env
from .errors import PreconditionError, StarvationError
from .streams import STREAM_RULE

COMMANDS = ("coexist", "single", "exit-tail", "fit", "oracle", "repulsion", "meander", "zs", "moments")
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(ValueError):
    pass


class UnknownCommandError(ConfigError):
    pass


@dataclass
class RunConfig:
    command: str
    rho: float = 0.0
    family: str | None = None
    z: tuple[int, int] = (1, 1)
    x: tuple[float, float] = (1.0, 1.0)
    n_grid: list[int] | None = None
    replicas: int | None = None
    particles: int = 20000
    epsilon: float = 0.25
    n_min: int = 64
    seed: int = 0
    out: str = "coexist-out"
    threads: int = 1
    n: int | None = None
    mode: str | None = None
    input: str | None = None
    t_grid: list[float] = field(default_factory=lambda: [0.5, 1.0])
    horizons: list[int] = field(default_factory=lambda: [1024, 4096])
    method: str = "htransform"
    draws: int = 1_000_000
    plot: bool = False

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["z"], d["x"] = list(self.z), list(self.x)
        return d


_DEFAULT_REPLICAS = {"coexist": 200_000, "single": 200_000, "exit-tail": 1_000_000,
                     "oracle": 100_000, "zs": 1_000_000, "repulsion": 100_000}
_DEFAULT_N = {"oracle": 6, "zs": 1024}
_DEFAULT_GRID = {"repulsion": "256:4096:x4"}


# -- parsing helpers -----------------------------------------------------------

def parse_grid(text) -> list[int]:
    """``a:b:x2`` (geometric), ``a:b:+s`` (arithmetic) or a comma list."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    text = str(text).strip()
    try:
        if ":" not in text:
            return [int(v) for v in text.split(",") if v.strip()]
        a, b, step = text.split(":")
        a, b = int(a), int(b)
        if step.startswith("x"):
            r = int(step[1:])
            if r < 2 or a < 1:
                raise ConfigError(f"geometric grid needs a >= 1 and ratio >= 2: {text!r}")
            out = []
            while a <= b:
                out.append(a)
                a *= r
            return out
        if step.startswith("+"):
            s = int(step[1:])
            if s < 1:
                raise ConfigError(f"arithmetic grid needs a step >= 1: {text!r}")
            return list(range(a, b + 1, s))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse grid {text!r}") from None
    raise ConfigError(f"grid step must look like x2 or +8: {text!r}")


def _pair(value, kind, name):
    if isinstance(value, str):
        value = value.split(",")
    try:
        out = tuple(kind(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"--{name} must be two comma-separated numbers, got {value!r}") from None
    if len(out) != 2:
        raise ConfigError(f"--{name} needs exactly two values, got {value!r}")
    return out


def _floats(value, name):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"--{name} must be a comma-separated list of numbers") from None


def _int_value(value, name):
    if isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    try:
        return int(float(value)) if isinstance(value, str) else int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="coexist",
        description="Simulation and estimation for two-type branching processes "
                    "in a correlated random environment.")
    ap.add_argument("command", nargs="?", help=" | ".join(COMMANDS))
    ap.add_argument("--config", help="JSON config file or run manifest; flags override it")
    ap.add_argument("--rho", type=float)
    ap.add_argument("--family", choices=[f.value for f in Family])
    ap.add_argument("--z", help="initial populations, e.g. 1,1")
    ap.add_argument("--x", help="walk start point inside the quadrant, e.g. 1,1")
    ap.add_argument("--n-grid", dest="n_grid", help="a:b:x2, a:b:+s or a comma list")
    ap.add_argument("--replicas", type=int)
    ap.add_argument("--particles", type=int)
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--n-min", dest="n_min", type=int)
    ap.add_argument("--n", type=int, help="horizon for oracle and zs")
    ap.add_argument("--mode", choices=["coexist", "single_1", "single_2"])
    ap.add_argument("--input", help="curve CSV for fit")
    ap.add_argument("--t-grid", dest="t_grid", help="meander times in (0, 1], e.g. 0.5,1")
    ap.add_argument("--horizons", help="two meander horizons, e.g. 1024,4096")
    ap.add_argument("--method", choices=["htransform", "branching"])
    ap.add_argument("--draws", type=int, help="environment draws for moments")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int, help="worker cap; results do not depend on it")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--plot", action="store_true", default=None, help="also write an SVG log-log plot")
    return ap


def _load_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]  # a run manifest
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file and flags, then validate."""
    raw = _load_file(args.config) if args.config else {}
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    flags = {k: v for k, v in vars(args).items() if k in known and v is not None}
    merged = {**raw, **flags}
    command = merged.get("command")
    if command not in COMMANDS:
        raise UnknownCommandError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    return validate(merged)


def _given(raw: dict, key: str, default):
    value = raw.get(key)
    return default if value is None else value


def validate(raw: dict) -> RunConfig:
    """Type-convert and check every precondition of the target operation.

    Nothing here samples; failures raise :class:`ConfigError`.
    """
    cmd = raw["command"]
    cfg = RunConfig(command=cmd)
    try:
        cfg.rho = float(raw.get("rho", cfg.rho))
    except (TypeError, ValueError):
        raise ConfigError("rho must be a number") from None
    if not (math.isfinite(cfg.rho) and -1.0 <= cfg.rho <= 1.0):
        raise ConfigError(f"rho must lie in [-1, 1], got {cfg.rho}")
    default_family = Family.DISCRETE_FOUR_POINT.value if cmd == "oracle" else Family.GAUSSIAN_SIGMOID.value
    cfg.family = str(_given(raw, "family", default_family))
    if cfg.family not in {f.value for f in Family}:
        raise ConfigError(f"family must be one of {[f.value for f in Family]}")
    cfg.z = _pair(raw.get("z", cfg.z), lambda v: _int_value(v, "z"), "z")
    cfg.x = _pair(raw.get("x", cfg.x), float, "x")
    cfg.n_grid = parse_grid(_given(raw, "n_grid", _DEFAULT_GRID.get(cmd, "64:2048:x2")))
    cfg.replicas = _int_value(_given(raw, "replicas", _DEFAULT_REPLICAS.get(cmd, 100_000)), "replicas")
    for name in ("particles", "n_min", "seed", "threads", "draws"):
        setattr(cfg, name, _int_value(raw.get(name, getattr(cfg, name)), name))
    cfg.n = _int_value(_given(raw, "n", _DEFAULT_N.get(cmd, 1024)), "n")
    cfg.epsilon = float(raw.get("epsilon", cfg.epsilon))
    cfg.mode = _given(raw, "mode", "single_1" if cmd == "single" else "coexist")
    cfg.input = raw.get("input")
    cfg.t_grid = _floats(raw.get("t_grid", cfg.t_grid), "t-grid")
    cfg.horizons = [_int_value(v, "horizons") for v in _floats(raw.get("horizons", cfg.horizons), "horizons")]
    cfg.method = str(raw.get("method", cfg.method))
    cfg.out = str(raw.get("out", cfg.out))
    cfg.plot = bool(raw.get("plot", False))

    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.replicas < 1:
        raise ConfigError("replicas must be >= 1")
    if not cfg.n_grid or cfg.n_grid[0] < 1 or any(b <= a for a, b in zip(cfg.n_grid, cfg.n_grid[1:])):
        raise ConfigError(f"n-grid must be a non-empty strictly increasing list of times >= 1, got {cfg.n_grid}")
    if min(cfg.z) < 0:
        raise ConfigError("initial populations must be non-negative")

    needs_walk = cmd in ("coexist", "single", "exit-tail", "oracle", "repulsion", "meander", "zs")
    if needs_walk and cfg.rho == -1.0:
        raise ConfigError("rho = -1 (asynchronous environment) is outside every estimator's domain")
    if cmd in ("exit-tail", "repulsion", "meander", "oracle") and not (min(cfg.x) > 0 and all(map(math.isfinite, cfg.x))):
        raise ConfigError(f"start point x={cfg.x} must lie inside the open quadrant")
    if cmd in ("repulsion",) or (cmd == "meander" and cfg.method == "htransform"):
        if not abs(cfg.rho) < 1:
            raise ConfigError("the h-transform sampler needs |rho| < 1")
        if cfg.particles < 100:
            raise ConfigError("need at least 100 particles")
    if cmd == "oracle":
        if cfg.family != Family.DISCRETE_FOUR_POINT.value:
            raise ConfigError("exact enumeration needs the discrete family")
        if not 1 <= cfg.n <= 8:
            raise ConfigError("oracle horizon n must be in 1..8")
    if cmd == "zs":
        if not 1 <= cfg.n <= 2048:
            raise ConfigError("zs horizon n must be in 1..2048")
        if min(cfg.z) < 1:
            raise ConfigError("zs needs both initial populations positive")
        if not cfg.epsilon > 0:
            raise ConfigError("epsilon must be positive")
    if cmd == "meander":
        if cfg.method not in ("htransform", "branching"):
            raise ConfigError("method must be htransform or branching")
        if len(cfg.horizons) != 2 or min(cfg.horizons) < 1:
            raise ConfigError("meander needs two horizons >= 1")
        if not cfg.t_grid or not all(0 < t <= 1 for t in cfg.t_grid):
            raise ConfigError("meander times must lie in (0, 1]")
    if cmd == "moments" and cfg.draws < 1000:
        raise ConfigError("moments needs at least 1000 draws")
    if cmd == "fit":
        if not cfg.input:
            raise ConfigError("fit needs --input CURVE.csv")
        if not Path(cfg.input).is_file():
            raise ConfigError(f"input {cfg.input} does not exist")
        if cfg.n_min < 1:
            raise ConfigError("n-min must be >= 1")
    if cfg.plot and cmd not in ("coexist", "single", "exit-tail", "fit"):
        raise ConfigError(f"--plot is only available for curve commands, not {cmd}")
    return cfg


# -- commands ------------------------------------------------------------------

def _spec(cfg: RunConfig):
    return make_env(cfg.family, cfg.rho)


def _theory_slope(rho: float, single: bool) -> float:
    from .estimators import theta_formula
    return -0.5 if single or rho >= 1.0 else -theta_formula(rho)


def _plot(cfg, out: Path, curve, theory_slope, title) -> list[Path]:
    from .estimators import fit_power_law
    fit = fit_power_law(curve, cfg.n_min)
    return [artifacts.emit_svg(out / f"{cfg.command}.svg", curve, fit.slope, fit.intercept,
                               theory_slope, title)]


def _run_curve(cfg: RunConfig, out: Path) -> list[Path]:
    spec = _spec(cfg)
    if cfg.command == "exit-tail":
        from .walk import exit_tail_curve
        curve = exit_tail_curve(spec, cfg.x, cfg.n_grid, cfg.replicas, cfg.seed, cfg.threads)
        first, second = cfg.x
        single = False
    else:
        from .branching import annealed_curve
        curve = annealed_curve(spec, cfg.z, cfg.n_grid, cfg.replicas, cfg.seed, cfg.mode, cfg.threads)
        # a single-type curve is written with the other population set to zero
        first = cfg.z[0] if cfg.mode != "single_2" else 0
        second = cfg.z[1] if cfg.mode != "single_1" else 0
        single = cfg.mode != "coexist"
    for w in curve.warnings:
        print(f"warning: {w}", file=sys.stderr)
    files = [artifacts.emit_csv(out / f"{cfg.command}.csv", artifacts.CURVE_HEADER,
                                artifacts.curve_rows(curve, first, second))]
    if cfg.plot:
        files += _plot(cfg, out, curve, _theory_slope(cfg.rho, single), f"{cfg.command} rho={cfg.rho}")
    return files


def _run_fit(cfg: RunConfig, out: Path) -> list[Path]:
    from .estimators import fit_power_law
    curve = artifacts.read_curve(cfg.input)
    z1, z2 = curve.meta["z"]
    single = z1 == 0 or z2 == 0
    fit = fit_power_law(curve, cfg.n_min)
    theory = _theory_slope(curve.meta["rho"], single)
    theta = -theory
    print(f"slope {fit.slope!r} stderr {fit.stderr!r} ci [{fit.ci[0]!r}, {fit.ci[1]!r}]")
    print(f"theta_formula {theta!r} difference {fit.slope + theta!r}")
    files = [artifacts.emit_csv(out / "fit.csv", artifacts.FIT_HEADER, [(
        fit.slope, fit.stderr, fit.ci[0], fit.ci[1], fit.intercept, theta, cfg.n_min, fit.points)])]
    if cfg.plot:
        files += _plot(cfg, out, curve, theory, f"fit rho={curve.meta['rho']}")
    return files


def _run_oracle(cfg: RunConfig, out: Path) -> list[Path]:
    from .estimators import oracle_coexistence, oracle_exit
    spec = _spec(cfg)
    rows = []
    for kind, reports in (("coexist", oracle_coexistence(spec, cfg.z, cfg.n, cfg.replicas,
                                                         cfg.seed, cfg.threads)),
                          ("exit", oracle_exit(spec, cfg.x, cfg.n, cfg.replicas, cfg.seed, cfg.threads))):
        for k, r in enumerate(reports, start=1):
            rows.append((kind, k, r.exact, r.estimate, r.stderr, r.zscore))
            print(f"{kind} n={k} exact {r.exact!r} estimate {r.estimate!r} "
                  f"stderr {r.stderr!r} z-score {r.zscore:+.3f}")
    return [artifacts.emit_csv(out / "oracle.csv", ("kind", "n", "exact", "estimate", "stderr", "zscore"), rows)]


def _run_repulsion(cfg: RunConfig, out: Path) -> list[Path]:
    from .harmonic import (HarmonicApprox, htransform_sample, repulsion_report,
                           unconditioned_repulsion)
    from .streams import Stream
    from .walk import cone_geometry
    spec = _spec(cfg)
    root = Stream(cfg.seed, "repulsion")
    ens = htransform_sample(HarmonicApprox(cone_geometry(cfg.rho)), spec, cfg.x, cfg.n_grid[-1],
                            cfg.particles, root.child(0), checkpoints=cfg.n_grid[:-1])
    cond = repulsion_report(ens)
    plain = unconditioned_repulsion(spec, cfg.x, cfg.n_grid, cfg.replicas, root.child(1))
    for a, b in zip(cond.rows(), plain.rows()):
        print(f"n={a[0]} conditioned {a[1]:.4f} +- {a[2]:.4f}  unconditioned {b[1]:.4f} +- {b[2]:.4f}")
    return [artifacts.emit_csv(out / "repulsion.csv", artifacts.REPULSION_HEADER, cond.rows()),
            artifacts.emit_csv(out / "repulsion_unconditioned.csv", artifacts.REPULSION_HEADER, plain.rows())]


def _run_meander(cfg: RunConfig, out: Path) -> list[Path]:
    from .estimators import meander_consistency
    rep = meander_consistency(_spec(cfg), cfg.x, cfg.t_grid, cfg.horizons, cfg.particles, cfg.seed,
                              cfg.method, cfg.z, workers=cfg.threads)
    rows = [(t, *k, rep.ess[0], rep.ess[1]) for t, k in zip(rep.t, rep.ks)]
    print(f"max KS {rep.max_ks:.4f}, ESS {rep.ess[0]:.0f} / {rep.ess[1]:.0f}")
    return [artifacts.emit_csv(out / "meander.csv",
                               ("t", "ks_first", "ks_second", "ks_radial", "ess_a", "ess_b"), rows)]


def _run_zs(cfg: RunConfig, out: Path) -> list[Path]:
    from .estimators import zs_deviation
    r = zs_deviation(_spec(cfg), cfg.z, cfg.n, cfg.replicas, cfg.epsilon, cfg.seed, cfg.threads)
    print(f"n={r.n} exceedance {r.frequency!r} +- {r.stderr!r} among {r.cosurviving} co-surviving runs")
    return [artifacts.emit_csv(out / "zs.csv", ("n", "epsilon", "frequency", "stderr", "exceed",
                                               "cosurviving", "saturated", "limit_regime", "runs"),
                               [(r.n, r.epsilon, r.frequency, r.stderr, r.exceed, r.cosurviving,
                                 r.saturated, r.limit_regime, r.runs)])]


def _run_moments(cfg: RunConfig, out: Path) -> list[Path]:
    from .env import env_moment_report
    r = env_moment_report(_spec(cfg), cfg.draws, cfg.seed)
    rows = [("mean_1", r.mean[0], r.mean_se[0], 0.0), ("mean_2", r.mean[1], r.mean_se[1], 0.0),
            ("var_1", r.var[0], r.var_se[0], 1.0), ("var_2", r.var[1], r.var_se[1], 1.0),
            ("corr", r.corr, r.corr_se, r.target_rho)]
    for name, v, s, t in rows:
        print(f"{name} {v:.5f} +- {s:.5f} (target {t})")
    if r.flagged:
        print("flagged: " + ", ".join(r.flagged), file=sys.stderr)
    return [artifacts.emit_csv(out / "moments.csv", ("moment", "value", "stderr", "target"), rows)]


_RUNNERS = {"coexist": _run_curve, "single": _run_curve, "exit-tail": _run_curve, "fit": _run_fit,
            "oracle": _run_oracle, "repulsion": _run_repulsion, "meander": _run_meander,
            "zs": _run_zs, "moments": _run_moments}


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK | os.X_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def run(cfg: RunConfig) -> list[Path]:
    """Execute a validated config; returns the written files, manifest last."""
    from .kernels import BACKEND
    out = _prepare_out(cfg.out)
    start = time.perf_counter()
    files = _RUNNERS[cfg.command](cfg, out)
    manifest = {
        "config": cfg.to_json(),
        "version": __version__,
        "backend": BACKEND,
        "duration_seconds": time.perf_counter() - start,
        "outputs": {p.name: artifacts.sha256(p) for p in files},
        "stream_rule": STREAM_RULE,
    }
    files.append(artifacts.write_manifest(out / f"{cfg.command}.manifest.json", manifest))
    return files


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports bad flags with status 2
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
    except (ConfigError, PreconditionError, ValueError) as exc:
        if isinstance(exc, UnknownCommandError):
            parser.print_usage(sys.stderr)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files = run(cfg)
    except StarvationError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except artifacts.EmptyOutputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in files:
        print(f"wrote {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
