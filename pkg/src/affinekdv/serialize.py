"""Deterministic file formats: CSV curves/curvatures, SVG polylines, JSON.

Floats are serialized with 17 significant digits and no locale, so repeated
runs with identical inputs produce byte-identical data files.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .geometry import CurvatureField, PlaneCurve
from .numerics import Grid


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_curve_csv(path, curve: PlaneCurve):
    xs = curve.grid.nodes
    with open(path, "w", newline="") as fh:
        fh.write("x,g1,g2\n")
        for x, (g1, g2) in zip(xs, curve.gamma):
            fh.write(f"{fmt(x)},{fmt(g1)},{fmt(g2)}\n")


def read_curve_csv(path):
    """Returns (s values, points) without normalizing anything."""
    xs = []
    pts = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "x,g1,g2":
            raise ValueError(f"unexpected curve header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b, c = line.split(",")
            xs.append(float(a))
            pts.append((float(b), float(c)))
    return np.asarray(xs), np.asarray(pts)


def write_curvature_csv(path, field: CurvatureField):
    xs = field.grid.nodes
    with open(path, "w", newline="") as fh:
        fh.write("x,q\n")
        for x, q in zip(xs, field.q):
            fh.write(f"{fmt(x)},{fmt(q)}\n")


def read_curvature_csv(path):
    xs = []
    qs = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "x,q":
            raise ValueError(f"unexpected curvature header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b = line.split(",")
            xs.append(float(a))
            qs.append(float(b))
    return np.asarray(xs), np.asarray(qs)


def write_svg_polyline(path, points, close: bool = False):
    """Single polyline with an auto viewBox; y is flipped to screen axes."""
    pts = np.asarray(points, dtype=float)
    x = pts[:, 0]
    y = -pts[:, 1]
    pad = 0.05 * max(np.ptp(x), np.ptp(y), 1e-9)
    x0, y0 = x.min() - pad, y.min() - pad
    w, h = np.ptp(x) + 2 * pad, np.ptp(y) + 2 * pad
    coords = " ".join(f"{fmt(a)},{fmt(b)}" for a, b in zip(x, y))
    if close:
        coords += f" {fmt(x[0])},{fmt(y[0])}"
    body = (
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{fmt(x0)} {fmt(y0)} {fmt(w)} {fmt(h)}">\n'
        f'  <polyline fill="none" stroke="black" '
        f'stroke-width="{fmt(0.004 * max(w, h))}" points="{coords}"/>\n'
        f"</svg>\n"
    )
    with open(path, "w") as fh:
        fh.write(body)


def json_dumps_stable(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, separators=(",", ": "),
                      allow_nan=False) + "\n"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def grid_to_json(grid: Grid) -> dict:
    return {"n": grid.n, "period": grid.period, "x0": grid.x0}
