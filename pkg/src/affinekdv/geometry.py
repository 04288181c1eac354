"""Central affine differential geometry of plane curves.

A curve gamma avoiding the origin with det(gamma, gamma') != 0 carries a
preferred parameter x with det(gamma, gamma_x) = 1; then gamma_xx = q gamma
defines the scalar curvature q = det(gamma_xx, gamma_x), a complete invariant
up to the unimodular group.  This module normalizes raw curves to that
parameter, extracts q, rebuilds curves from q by frame integration, measures
holonomy over a period, and lifts scalar fields to tangent fields of the
unit-determinant constraint manifold.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import numerics
from .errors import DegenerateCurve, NotNormalized
from .numerics import Grid, Mat2Path

FramePath = Mat2Path

_NORMALIZATION_TOL = 1e-4


@dataclass(frozen=True)
class PlaneCurve:
    """Curve samples on a uniform grid in central affine arclength."""

    grid: Grid
    gamma: np.ndarray          # (n, 2)
    closed: bool = True

    def normalization_defect(self) -> float:
        """max |det(gamma, gamma_x) - 1| over the nodes."""
        gx = _curve_derivative(self, 1)
        det = self.gamma[:, 0] * gx[:, 1] - self.gamma[:, 1] * gx[:, 0]
        return float(np.max(np.abs(det - 1.0)))


@dataclass(frozen=True)
class CurvatureField:
    """Sampled central affine curvature on a uniform grid."""

    grid: Grid
    q: np.ndarray

    @property
    def resolved(self) -> bool:
        return numerics.spectral_tail_ratio(self.grid, self.q) < 1e-8


@dataclass(frozen=True)
class TangentField:
    """Scalar xi and its lift -(xi_x/2) gamma + xi gamma_x along a curve."""

    xi: np.ndarray
    lifted: np.ndarray         # (n, 2)


# ---------------------------------------------------------------------------
# finite differences for open curves (one-sided near the ends, reduced order)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _fd_weights(offsets: tuple, order: int) -> np.ndarray:
    """Stencil weights on integer offsets for the order-th derivative."""
    p = len(offsets)
    A = np.vander(np.asarray(offsets, dtype=float), p, increasing=True).T
    rhs = np.zeros(p)
    fact = 1.0
    for i in range(2, order + 1):
        fact *= i
    rhs[order] = fact
    return np.linalg.solve(A, rhs)


def fd_derivative(f, dx: float, order: int, points: int = 9) -> np.ndarray:
    """High-order finite-difference derivative on a uniform open grid."""
    f = np.asarray(f, dtype=float)
    n = f.size
    points = min(points, n)
    half = points // 2
    out = np.empty(n)
    central = _fd_weights(tuple(range(-half, points - half)), order)
    for i in range(n):
        lo = min(max(i - half, 0), n - points)
        offs = tuple(range(lo - i, lo - i + points))
        w = central if offs[0] == -half else _fd_weights(offs, order)
        out[i] = w @ f[lo:lo + points]
    return out / dx ** order


def _lagrange_interp(xs, ys, xq) -> np.ndarray:
    """Local polynomial interpolation of samples (xs, ys) at query points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    out = np.empty(xq.shape)
    window = min(8, xs.size)
    for m, x in enumerate(xq):
        i = int(np.searchsorted(xs, x))
        lo = min(max(i - window // 2, 0), xs.size - window)
        xw = xs[lo:lo + window]
        yw = ys[lo:lo + window]
        total = 0.0
        for a in range(window):
            li = 1.0
            for b in range(window):
                if a != b:
                    li *= (x - xw[b]) / (xw[a] - xw[b])
            total += yw[a] * li
        out[m] = total
    return out


# raw-period spectral helpers that accept any sample count (input stage only)


def _raw_dx(f, span: float) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    k = 2.0 * np.pi * np.arange(f.size // 2 + 1) / span
    w = 1j * k
    if f.size % 2 == 0:
        w[-1] = 0.0
    return np.fft.irfft(np.fft.rfft(f) * w, n=f.size)


def _raw_trig_eval(f, span: float, s0: float, sq) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    n = f.size
    coef = np.fft.rfft(f)
    theta = (np.atleast_1d(np.asarray(sq, dtype=float)) - s0) * (2.0 * np.pi / span)
    out = np.full(theta.shape, coef[0].real / n)
    j = np.arange(1, (n + 1) // 2)
    if j.size:
        ph = np.exp(1j * np.outer(j, theta))
        out += (2.0 / n) * np.real(coef[1:(n + 1) // 2] @ ph)
    if n % 2 == 0:
        out += (coef[-1].real / n) * np.cos((n // 2) * theta)
    return out


def _curve_derivative(curve: PlaneCurve, order: int) -> np.ndarray:
    g = curve.gamma
    if curve.closed:
        return np.column_stack([
            numerics.spectral_derivative(curve.grid, g[:, i], order)
            for i in range(2)])
    return np.column_stack([
        fd_derivative(g[:, i], curve.grid.dx, order) for i in range(2)])


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def reparametrize(points, s=None, closed: bool = True, n: int | None = None) -> PlaneCurve:
    """Resample a raw curve onto a uniform grid in central affine arclength.

    points: (m, 2) samples on a uniformly spaced parameter (full period for a
    closed curve).  The arclength differential is det(gamma, gamma_s) ds; a
    negative orientation is flipped, a sign change raises DegenerateCurve.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (m, 2)")
    m = pts.shape[0]
    if s is None:
        span = 2.0 * np.pi if closed else 1.0
        s = (span / m) * np.arange(m) if closed else np.linspace(0.0, span, m)
    else:
        s = np.asarray(s, dtype=float)
        steps = np.diff(s)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("parameter samples must be uniformly spaced")
        span = (s[1] - s[0]) * m if closed else float(s[-1] - s[0])

    if closed:
        ds_gamma = np.column_stack([_raw_dx(pts[:, i], span) for i in range(2)])
    else:
        h = s[1] - s[0]
        ds_gamma = np.column_stack([fd_derivative(pts[:, i], h, 1) for i in range(2)])
    speed = pts[:, 0] * ds_gamma[:, 1] - pts[:, 1] * ds_gamma[:, 0]

    if np.all(speed < 0):
        flipped = pts[::-1].copy()
        if closed:
            flipped = np.roll(flipped, 1, axis=0)  # keep the first node first
        return reparametrize(flipped, s=None if s is None else s, closed=closed, n=n)
    peak = float(np.max(np.abs(speed)))
    if peak == 0.0 or np.min(speed) <= 1e-9 * peak:
        raise DegenerateCurve("det(gamma, gamma_s) vanishes or changes sign")

    if n is None:
        n = 1 << max(6, int(np.ceil(np.log2(m))))

    if closed:
        mean_speed = float(np.mean(speed))
        total = mean_speed * span
        wiggle = speed - mean_speed
        # zero-mean primitive of the periodic part, evaluable anywhere
        coef = np.fft.rfft(wiggle)
        k = 2.0 * np.pi * np.arange(m // 2 + 1) / span
        k[0] = 1.0
        prim = coef / (1j * k)
        prim[0] = 0.0
        if m % 2 == 0:
            prim[-1] = 0.0
        wiggle_prim = np.fft.irfft(prim, n=m)
        s0 = float(s[0])
        p0 = wiggle_prim[0]

        def arclen(sv):
            return mean_speed * (sv - s0) + _raw_trig_eval(wiggle_prim, span, s0, sv) - p0

        grid = Grid(n=n, period=total)
        targets = grid.nodes
        sv = s0 + targets / mean_speed
        for _ in range(60):
            resid = arclen(sv) - targets
            if float(np.max(np.abs(resid))) < 1e-14 * max(1.0, total):
                break
            dv = _raw_trig_eval(speed, span, s0, sv)
            sv = sv - resid / dv
        gamma = np.column_stack([
            _raw_trig_eval(pts[:, i], span, s0, sv) for i in range(2)])
        curve = PlaneCurve(grid=grid, gamma=gamma, closed=True)
    else:
        h = s[1] - s[0]
        x_of_s = np.concatenate([[0.0], np.cumsum((speed[1:] + speed[:-1]) * 0.5 * h)])
        total = float(x_of_s[-1])
        # nodes span [0, total] inclusive; the grid period is total*n/(n-1)
        grid = Grid(n=n, period=total * n / (n - 1.0))
        targets = grid.nodes
        sv = _lagrange_interp(x_of_s, s, targets)
        gamma = np.column_stack([
            _lagrange_interp(s, pts[:, i], sv) for i in range(2)])
        curve = PlaneCurve(grid=grid, gamma=gamma, closed=False)

    defect = curve.normalization_defect()
    if defect > 1e-6:
        raise DegenerateCurve(
            f"normalization failed, det deviates by {defect:.2e}; "
            "input may be under-resolved")
    return curve


def curvature(curve: PlaneCurve) -> CurvatureField:
    """q = det(gamma_xx, gamma_x); requires unit-determinant normalization."""
    defect = curve.normalization_defect()
    if defect > _NORMALIZATION_TOL:
        raise NotNormalized(f"det(gamma, gamma_x) deviates by {defect:.2e}")
    gx = _curve_derivative(curve, 1)
    gxx = _curve_derivative(curve, 2)
    q = gxx[:, 0] * gx[:, 1] - gxx[:, 1] * gx[:, 0]
    return CurvatureField(grid=curve.grid, q=q)


def frame(curve: PlaneCurve) -> FramePath:
    """Unimodular frame g = (gamma, gamma_x) sampled along the curve."""
    gx = _curve_derivative(curve, 1)
    samples = np.stack([curve.gamma, gx], axis=2)
    return Mat2Path(params=curve.grid.nodes.copy(), samples=samples, axis="x")


def _frame_stage_array(field: CurvatureField, substeps: int) -> np.ndarray:
    """[[0, q], [1, 0]] on the RK4 stage points of an n*substeps march."""
    grid = field.grid
    fine = numerics.resample(grid, field.q, 2 * substeps)
    steps = grid.n * substeps
    idx = np.arange(2 * steps + 1) % fine.size
    K = np.zeros((2 * steps + 1, 2, 2))
    K[:, 0, 1] = fine[idx]
    K[:, 1, 0] = 1.0
    return K


def reconstruct(field: CurvatureField, g0, substeps: int = 8):
    """Integrate g_x = g [[0, q], [1, 0]] from g0; gamma is the first column.

    Returns (PlaneCurve, FramePath); the frame path carries one extra wrap
    sample at x0 + period for closure diagnostics.
    """
    g0 = np.asarray(g0, dtype=float)
    if abs(g0[0, 0] * g0[1, 1] - g0[0, 1] * g0[1, 0] - 1.0) > 1e-8:
        raise NotNormalized("initial frame must have determinant 1")
    grid = field.grid
    steps = grid.n * substeps
    K = _frame_stage_array(field, substeps)
    path = numerics.rk4_matrix(g0, K, (grid.x0, grid.x0 + grid.period), steps, axis="x")
    node_samples = path.samples[::substeps]
    node_params = path.params[::substeps]
    frame_path = Mat2Path(params=node_params, samples=node_samples, axis="x")
    gamma = node_samples[:grid.n, :, 0]
    curve = PlaneCurve(grid=grid, gamma=gamma.copy(), closed=True)
    return curve, frame_path


@dataclass(frozen=True)
class HolonomyResult:
    matrix: np.ndarray
    is_closed: bool
    defect: float


def holonomy(field: CurvatureField, substeps: int = 8) -> HolonomyResult:
    """Frame transport over one period from the identity."""
    _, path = reconstruct(field, np.eye(2), substeps=substeps)
    end = path.samples[-1]
    defect = float(np.max(np.abs(end - np.eye(2))))
    return HolonomyResult(matrix=end, is_closed=defect <= 1e-6, defect=defect)


def lift(xi, curve: PlaneCurve) -> TangentField:
    """Tangent lift -(xi_x/2) gamma + xi gamma_x of a scalar field."""
    xi = np.asarray(xi, dtype=float)
    if curve.closed:
        xi_x = numerics.spectral_derivative(curve.grid, xi, 1)
    else:
        xi_x = fd_derivative(xi, curve.grid.dx, 1)
    gx = _curve_derivative(curve, 1)
    lifted = -0.5 * xi_x[:, None] * curve.gamma + xi[:, None] * gx
    return TangentField(xi=xi, lifted=lifted)


def tangency_defect(field: TangentField, curve: PlaneCurve) -> float:
    """max |det(X, gamma_x) + det(gamma, X_x)| for a lifted field X."""
    X = field.lifted
    gx = _curve_derivative(curve, 1)
    if curve.closed:
        Xx = np.column_stack([
            numerics.spectral_derivative(curve.grid, X[:, i], 1) for i in range(2)])
    else:
        Xx = np.column_stack([fd_derivative(X[:, i], curve.grid.dx, 1) for i in range(2)])
    g = curve.gamma
    expr = (X[:, 0] * gx[:, 1] - X[:, 1] * gx[:, 0]
            + g[:, 0] * Xx[:, 1] - g[:, 1] * Xx[:, 0])
    return float(np.max(np.abs(expr)))
