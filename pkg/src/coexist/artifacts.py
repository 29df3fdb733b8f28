"""CSV, SVG and manifest writers.

Floats are written with ``repr``, the shortest decimal that round-trips,
so identical results give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .curves import SurvivalCurve

CURVE_HEADER = ("rho", "family", "z1", "z2", "n", "estimate", "stderr", "replicas", "seed")
FIT_HEADER = ("slope", "stderr", "ci_lo", "ci_hi", "intercept", "theta_theory", "n_min", "points")
REPULSION_HEADER = ("n", "fraction", "stderr", "particles")


class EmptyOutputError(ValueError):
    pass


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(header, rows) -> str:
    rows = list(rows)
    if not rows:
        raise EmptyOutputError("refusing to write a CSV without rows")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def emit_csv(path, header, rows) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows), encoding="utf-8")
    return path


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_csv(path_or_text) -> tuple[list[str], list[tuple]]:
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    return header, [tuple(_parse_cell(c) for c in row) for row in reader if row]


def curve_rows(curve: SurvivalCurve, first: float, second: float):
    meta = curve.meta
    for n, e, s in zip(curve.n, curve.estimate, curve.stderr):
        yield (float(meta["rho"]), meta["family"], first, second, int(n), float(e), float(s),
               int(curve.replicas), int(meta["seed"]))


def read_curve(path) -> SurvivalCurve:
    header, rows = parse_csv(Path(path))
    if tuple(header) != CURVE_HEADER:
        raise ValueError(f"{path}: not a survival curve CSV (header {header})")
    if not rows:
        raise EmptyOutputError(f"{path}: no rows")
    first = rows[0]
    return SurvivalCurve([r[4] for r in rows], [float(r[5]) for r in rows], [float(r[6]) for r in rows],
                         int(first[7]), {"rho": float(first[0]), "family": first[1],
                                         "z": (first[2], first[3]), "seed": int(first[8])})


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- SVG ---------------------------------------------------------------------

def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def svg_text(curve: SurvivalCurve, slope: float, intercept: float, theory_slope: float,
             title: str = "") -> str:
    """Static log-log plot: one point series, the fitted line and the theoretical slope.

    Exactly two ``<line>`` elements are emitted (fit and theory); axes and
    error bars are ``<path>`` elements.
    """
    keep = curve.estimate > 0
    if not np.any(keep):
        raise EmptyOutputError("no positive estimates to plot")
    lx = np.log10(curve.n[keep].astype(float))
    ly = np.log10(curve.estimate[keep])
    lo_err = np.log10(np.clip(curve.estimate[keep] - curve.stderr[keep], 1e-300, None))
    hi_err = np.log10(curve.estimate[keep] + curve.stderr[keep])
    x_lo, x_hi = lx.min() - 0.1, lx.max() + 0.1
    x_mid = 0.5 * (lx.min() + lx.max())
    fit = lambda v: (intercept + slope * v * math.log(10)) / math.log(10)  # noqa: E731
    # theory line shares the fitted value at the middle of the range
    theory = lambda v: fit(x_mid) + theory_slope * (v - x_mid)  # noqa: E731
    ends = [fit(x_lo), fit(x_hi), theory(x_lo), theory(x_hi)]
    y_lo = min(lo_err.min(), *ends) - 0.1
    y_hi = max(hi_err.max(), *ends) + 0.1
    width, height, pad = 640, 480, 60
    sx = _scale(x_lo, x_hi, pad, width - pad / 2)
    sy = _scale(y_lo, y_hi, height - pad, pad / 2)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<rect x="0" y="0" width="100%" height="100%" fill="white"/>',
           f'<path class="axes" d="M{pad},{pad / 2} V{height - pad} H{width - pad / 2}" '
           'stroke="black" fill="none"/>']
    for v in range(math.ceil(x_lo), math.floor(x_hi) + 1):
        out.append(f'<text x="{sx(v):.2f}" y="{height - pad + 18}" font-size="12" '
                   f'text-anchor="middle">1e{v}</text>')
    for v in range(math.ceil(y_lo), math.floor(y_hi) + 1):
        out.append(f'<text x="{pad - 6}" y="{sy(v):.2f}" font-size="12" '
                   f'text-anchor="end">1e{v}</text>')
    bars = " ".join(f"M{sx(a):.2f},{sy(b):.2f} V{sy(c):.2f}" for a, b, c in zip(lx, lo_err, hi_err))
    out.append(f'<path class="errors" d="{bars}" stroke="gray" fill="none"/>')
    out.append('<g class="points" fill="black">')
    out += [f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3"/>' for a, b in zip(lx, ly)]
    out.append("</g>")
    out.append(f'<line class="fit" x1="{sx(x_lo):.2f}" y1="{sy(fit(x_lo)):.2f}" '
               f'x2="{sx(x_hi):.2f}" y2="{sy(fit(x_hi)):.2f}" stroke="steelblue" stroke-width="2"/>')
    out.append(f'<line class="theory" x1="{sx(x_lo):.2f}" y1="{sy(theory(x_lo)):.2f}" '
               f'x2="{sx(x_hi):.2f}" y2="{sy(theory(x_hi)):.2f}" stroke="firebrick" '
               'stroke-dasharray="6,4" stroke-width="2"/>')
    label = f"fit slope {slope:.4f}, theory {theory_slope:.4f}"
    out.append(f'<text x="{width / 2}" y="20" font-size="14" text-anchor="middle">'
               f'{title + ": " if title else ""}{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(path, curve: SurvivalCurve, slope: float, intercept: float, theory_slope: float,
             title: str = "") -> Path:
    path = Path(path)
    path.write_text(svg_text(curve, slope, intercept, theory_slope, title), encoding="utf-8")
    return path
