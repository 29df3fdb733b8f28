"""Numba versus numpy timings for the hot kernels.

Run with ``python3 benchmarks/bench_kernels.py [--repeat 5]``.  Each kernel
is warmed up once (so JIT compilation is excluded) and the best of
``--repeat`` runs is reported together with the agreement of the outputs.
"""
import argparse
import time

import numpy as np

from coexist import kernels
from coexist.walk import cone_geometry


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    g = cone_geometry(0.3)
    coeffs = (g.T[0, 0], g.T[0, 1], g.p, 2.0)
    table = 1.0 + 0.1 * rng.random((17, 17))
    steps_c = rng.standard_normal((2048, 1024, 2))
    steps_e = rng.standard_normal((100_000, 64, 2))
    start = np.tile([3.0, 3.0], (100_000, 1))
    pts = rng.random((1_000_000, 2)) * 10 + 0.1
    w = rng.random(1_000_000)
    w /= w.sum()
    grid = 2 ** np.arange(6, 11)

    steps_s = rng.standard_normal((4, 200_000, 2))

    def sis(mod):
        pos = np.tile([1.0, 1.0], (200_000, 1))
        v = mod.harmonic_values(pos, *coeffs, table, 1.0)
        wt = np.full(200_000, 1 / 200_000)
        for k in range(4):
            mod.sis_step(pos, v, wt, steps_s[k], *coeffs, table, 1.0)
        return wt

    return {
        "coexist_values 2048x1024": lambda m: m.coexist_values(steps_c, 1, 1, True, True, grid),
        "exit_scan 1e5x64": lambda m: m.exit_scan(start, steps_e)[0],
        "harmonic_extension 1e5x64": lambda m: m.harmonic_extension(np.array([3.0, 3.0]), steps_e, *coeffs),
        "harmonic_values 1e6": lambda m: m.harmonic_values(pts, *coeffs, table, 1.0),
        "sis_step 2e5 x4": sis,
        "systematic_resample 1e6": lambda m: m.systematic_resample(w, 0.37),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.numba_impl is None:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':32s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, fn in cases(np.random.default_rng(1)).items():
        a = np.asarray(fn(kernels.numpy_impl), dtype=float)
        b = np.asarray(fn(kernels.numba_impl), dtype=float)
        scale = np.maximum(np.abs(a), 1e-12)
        diff = float(np.max(np.abs(a - b) / scale))
        t_np = best_of(lambda: fn(kernels.numpy_impl), args.repeat)
        t_nb = best_of(lambda: fn(kernels.numba_impl), args.repeat)
        print(f"{name:32s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:13.2e}")


if __name__ == "__main__":
    main()
