"""Shared numerical kernels.

Periodic grids, spectral differentiation / antidifferentiation with 2/3-rule
dealiasing, RK4 integration of 2x2 matrix ODEs g' = g K(s), and an ETDRK4
exponential integrator for stiff dispersive flows.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CflError, MeanNotZero, StepSizeRejected


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with n nodes covering [x0, x0 + period).

    n must be a power of two (>= 16) so transforms stay fast and dealiasing
    cutoffs are unambiguous.  x0 = -period/2 gives a centered box for
    line-domain problems run on a large periodic interval.
    """

    n: int
    period: float
    x0: float = 0.0

    def __post_init__(self):
        if self.n < 16 or (self.n & (self.n - 1)) != 0:
            raise ValueError("grid size must be a power of two and >= 16")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def dx(self) -> float:
        return self.period / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Physical wavenumbers of the rfft layout: 2*pi*j/period, j=0..n/2."""
        return (2.0 * np.pi / self.period) * np.arange(self.n // 2 + 1)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask on rfft modes: keep j <= n//3."""
        j = np.arange(self.n // 2 + 1)
        return j <= self.n // 3

    def node_index(self, x: float) -> int:
        """Index of the node closest to x (modulo the period)."""
        m = int(round((x - self.x0) / self.dx)) % self.n
        return m


def ik_power(grid: Grid, order: int) -> np.ndarray:
    """(i k)^order on the rfft modes, Nyquist zeroed for odd orders."""
    w = (1j * grid.wavenumbers) ** order
    if order % 2 == 1 and grid.n % 2 == 0:
        w[-1] = 0.0
    return w


def spectral_derivative(grid: Grid, f, order: int = 1) -> np.ndarray:
    """order-th x-derivative of periodic samples f by Fourier transform."""
    f = np.asarray(f, dtype=float)
    fh = np.fft.rfft(f)
    return np.fft.irfft(fh * ik_power(grid, order), n=grid.n)


def antiderivative_zero_mean(grid: Grid, f, tol: float = 1e-9) -> np.ndarray:
    """Unique zero-mean primitive of a zero-mean periodic field.

    Raises MeanNotZero when |mean(f)| exceeds tol * max(1, ||f||_inf).
    """
    f = np.asarray(f, dtype=float)
    scale = max(1.0, float(np.max(np.abs(f))) if f.size else 1.0)
    mean = float(np.mean(f))
    if abs(mean) > tol * scale:
        raise MeanNotZero(f"mean {mean:.3e} exceeds tolerance {tol:.1e} * {scale:.3e}")
    fh = np.fft.rfft(f)
    k = grid.wavenumbers.copy()
    k[0] = 1.0  # avoid divide-by-zero; mode 0 is forced to 0 below
    gh = fh / (1j * k)
    gh[0] = 0.0
    if grid.n % 2 == 0:
        gh[-1] = 0.0
    return np.fft.irfft(gh, n=grid.n)


def dealias(grid: Grid, f) -> np.ndarray:
    """Project samples onto the 2/3-rule retained modes."""
    fh = np.fft.rfft(np.asarray(f, dtype=float))
    return np.fft.irfft(fh * grid.dealias_mask, n=grid.n)


def quadrature(grid: Grid, f) -> float:
    """Integral over one period (trapezoid = exact spectral quadrature)."""
    return float(np.mean(np.asarray(f, dtype=float)) * grid.period)


def spectral_tail_ratio(grid: Grid, f) -> float:
    """max |f_hat| over the dealias zone divided by the overall max |f_hat|."""
    fh = np.abs(np.fft.rfft(np.asarray(f, dtype=float)))
    peak = float(fh.max())
    if peak == 0.0:
        return 0.0
    tail = fh[~grid.dealias_mask]
    return float(tail.max() / peak) if tail.size else 0.0


def resample(grid: Grid, f, factor: int) -> np.ndarray:
    """Values of the band-limited interpolant on the factor-times finer grid."""
    f = np.asarray(f, dtype=float)
    if factor == 1:
        return f.copy()
    fh = np.fft.rfft(f)
    m = grid.n * factor
    gh = np.zeros(m // 2 + 1, dtype=complex)
    gh[: fh.size] = fh
    if grid.n % 2 == 0:
        gh[grid.n // 2] = fh[-1] * 0.5  # Nyquist becomes an interior conjugate pair
    return np.fft.irfft(gh, n=m) * factor


def trig_interpolate(grid: Grid, f, xq) -> np.ndarray:
    """Evaluate the trigonometric interpolant of samples f at arbitrary points."""
    f = np.asarray(f, dtype=float)
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    coef = np.fft.rfft(f)
    theta = (xq - grid.x0) * (2.0 * np.pi / grid.period)
    n = grid.n
    out = np.full(xq.shape, coef[0].real / n)
    # interior modes, chunked to bound the temporary matrix
    j = np.arange(1, n // 2)
    for start in range(0, xq.size, 2048):
        sl = slice(start, start + 2048)
        ph = np.exp(1j * np.outer(j, theta[sl]))
        out[sl] += (2.0 / n) * np.real(coef[1:n // 2] @ ph)
    if n % 2 == 0:
        out += (coef[-1].real / n) * np.cos((n // 2) * theta)
    return out


# ---------------------------------------------------------------------------
# 2x2 matrix paths and RK4 marching of g' = g K
# ---------------------------------------------------------------------------


@dataclass
class Mat2Path:
    """Samples of a 2x2 matrix-valued path along one parameter axis."""

    params: np.ndarray        # (m,)
    samples: np.ndarray       # (m, 2, 2)
    axis: str = "x"

    def determinants(self) -> np.ndarray:
        s = self.samples
        return s[:, 0, 0] * s[:, 1, 1] - s[:, 0, 1] * s[:, 1, 0]

    def det_drift(self) -> float:
        d = self.determinants()
        return float(np.max(np.abs(d - d[0])))

    def is_unimodular(self, tol: float = 1e-6) -> bool:
        return bool(np.max(np.abs(self.determinants() - 1.0)) <= tol)


def _stage_array(coefficient, span, steps) -> np.ndarray:
    """Coefficient K at the 2*steps+1 stage abscissae of classical RK4."""
    if isinstance(coefficient, np.ndarray):
        if coefficient.shape != (2 * steps + 1, 2, 2):
            raise ValueError("stage array must have shape (2*steps+1, 2, 2)")
        return coefficient
    s0, s1 = span
    h = (s1 - s0) / steps
    pts = s0 + 0.5 * h * np.arange(2 * steps + 1)
    return np.array([np.asarray(coefficient(s), dtype=float) for s in pts])


def rk4_matrix(initial, coefficient, span, steps, axis: str = "x",
               det_tol: float = 1e-10) -> Mat2Path:
    """March g' = g K(s) with classical RK4 from g(span[0]) = initial.

    coefficient is either a callable s -> 2x2 array or a precomputed stage
    array of shape (2*steps+1, 2, 2) holding K at s0, s0+h/2, s0+h, ...
    Raises StepSizeRejected when per-step determinant drift exceeds det_tol
    (scaled by the running determinant), which for trace-free K signals an
    overly large step.
    """
    g = np.asarray(initial, dtype=float)
    if g.shape != (2, 2):
        raise ValueError("initial matrix must be 2x2")
    K = _stage_array(coefficient, span, steps)
    s0, s1 = span
    h = (s1 - s0) / steps
    out = np.empty((steps + 1, 2, 2))
    out[0] = g
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    det_prev = a * d - b * c
    for m in range(steps):
        k1 = K[2 * m]
        k2 = K[2 * m + 1]
        k4 = K[2 * m + 2]
        p = h * k1[0, 0]; r_ = h * k1[1, 0]; u = h * k1[0, 1]; v = h * k1[1, 1]
        A1 = a * p + b * r_; B1 = a * u + b * v
        C1 = c * p + d * r_; D1 = c * u + d * v
        p = h * k2[0, 0]; r_ = h * k2[1, 0]; u = h * k2[0, 1]; v = h * k2[1, 1]
        a2 = a + 0.5 * A1; b2 = b + 0.5 * B1; c2 = c + 0.5 * C1; d2 = d + 0.5 * D1
        A2 = a2 * p + b2 * r_; B2 = a2 * u + b2 * v
        C2 = c2 * p + d2 * r_; D2 = c2 * u + d2 * v
        a3 = a + 0.5 * A2; b3 = b + 0.5 * B2; c3 = c + 0.5 * C2; d3 = d + 0.5 * D2
        A3 = a3 * p + b3 * r_; B3 = a3 * u + b3 * v
        C3 = c3 * p + d3 * r_; D3 = c3 * u + d3 * v
        p = h * k4[0, 0]; r_ = h * k4[1, 0]; u = h * k4[0, 1]; v = h * k4[1, 1]
        a4 = a + A3; b4 = b + B3; c4 = c + C3; d4 = d + D3
        A4 = a4 * p + b4 * r_; B4 = a4 * u + b4 * v
        C4 = c4 * p + d4 * r_; D4 = c4 * u + d4 * v
        a += (A1 + 2 * A2 + 2 * A3 + A4) / 6.0
        b += (B1 + 2 * B2 + 2 * B3 + B4) / 6.0
        c += (C1 + 2 * C2 + 2 * C3 + C4) / 6.0
        d += (D1 + 2 * D2 + 2 * D3 + D4) / 6.0
        det = a * d - b * c
        # the drift floor scales with the cancellation level of ad - bc, so
        # hyperbolically growing frames are judged relative to their size
        floor = max(1.0, abs(a * d) + abs(b * c))
        if abs(det - det_prev) > det_tol * floor:
            # trace-free coefficients preserve det exactly in the continuum
            tr = abs(k1[0, 0] + k1[1, 1])
            if tr < 1e-12:
                raise StepSizeRejected(
                    f"determinant drift {abs(det - det_prev):.2e} at step {m}")
        det_prev = det
        out[m + 1, 0, 0] = a; out[m + 1, 0, 1] = b
        out[m + 1, 1, 0] = c; out[m + 1, 1, 1] = d
    params = s0 + h * np.arange(steps + 1)
    return Mat2Path(params=params, samples=out, axis=axis)


def refine_matrix_series(K: np.ndarray) -> np.ndarray:
    """Insert cubic-interpolated midpoints into a uniform matrix series.

    Used to halve the step of a stage-array RK4 march when the per-step
    determinant guard rejects the current resolution.
    """
    M = K.shape[0] - 1
    out = np.empty((2 * M + 1,) + K.shape[1:])
    out[::2] = K
    if M >= 3:
        out[3:-2:2] = (-K[:-3] + 9 * K[1:-2] + 9 * K[2:-1] - K[3:]) / 16.0
        out[1] = (5 * K[0] + 15 * K[1] - 5 * K[2] + K[3]) / 16.0
        out[-2] = (5 * K[-1] + 15 * K[-2] - 5 * K[-3] + K[-4]) / 16.0
    else:
        out[1::2] = 0.5 * (K[:-1] + K[1:])
    return out


def rk4_matrix_stages_adaptive(initial, stages: np.ndarray, span, axis: str = "x",
                               max_refinements: int = 5) -> Mat2Path:
    """Stage-array RK4 march that halves its step until the guard passes.

    Returns the path sampled at the original stage-pair resolution, whatever
    refinement level succeeded.
    """
    K = stages
    steps = (stages.shape[0] - 1) // 2
    for attempt in range(max_refinements + 1):
        try:
            path = rk4_matrix(initial, K, span, steps * 2 ** attempt, axis=axis)
            stride = 2 ** attempt
            return Mat2Path(params=path.params[::stride],
                            samples=path.samples[::stride], axis=axis)
        except StepSizeRejected:
            if attempt == max_refinements:
                raise
            K = refine_matrix_series(K)
    raise AssertionError("unreachable")


def rk4_matrix_augmented(initial, initial_aux, coefficient, coefficient_lam,
                         span, steps) -> tuple[np.ndarray, np.ndarray]:
    """March the pair E' = E K, E1' = E1 K + E Kl (variational system).

    Used to carry the lambda-derivative of an extended frame alongside the
    frame itself.  Both coefficient arguments follow the rk4_matrix stage
    contract.  Returns the full paths (steps+1, 2, 2) for E and E1.
    """
    K = _stage_array(coefficient, span, steps)
    Kl = _stage_array(coefficient_lam, span, steps)
    s0, s1 = span
    h = (s1 - s0) / steps
    E = np.asarray(initial, dtype=float).copy()
    E1 = np.asarray(initial_aux, dtype=float).copy()
    outE = np.empty((steps + 1, 2, 2))
    outE1 = np.empty((steps + 1, 2, 2))
    outE[0] = E
    outE1[0] = E1

    def rhs(e, e1, k, kl):
        return e @ k, e1 @ k + e @ kl

    for m in range(steps):
        k1, k2, k4 = K[2 * m], K[2 * m + 1], K[2 * m + 2]
        l1, l2, l4 = Kl[2 * m], Kl[2 * m + 1], Kl[2 * m + 2]
        f1, g1 = rhs(E, E1, k1, l1)
        f2, g2 = rhs(E + 0.5 * h * f1, E1 + 0.5 * h * g1, k2, l2)
        f3, g3 = rhs(E + 0.5 * h * f2, E1 + 0.5 * h * g2, k2, l2)
        f4, g4 = rhs(E + h * f3, E1 + h * g3, k4, l4)
        E = E + (h / 6.0) * (f1 + 2 * f2 + 2 * f3 + f4)
        E1 = E1 + (h / 6.0) * (g1 + 2 * g2 + 2 * g3 + g4)
        outE[m + 1] = E
        outE1[m + 1] = E1
    return outE, outE1


# ---------------------------------------------------------------------------
# time stepping for dispersive scalar flows
# ---------------------------------------------------------------------------


class Etdrk4:
    """ETDRK4 stepper for v_t = L v + N(v) in rfft space.

    linear_symbol is the diagonal symbol of L on the rfft modes (complex,
    purely imaginary for the dispersive flows here).  nonlinear maps the
    spectral state to the spectral value of N.  Coefficients use the standard
    contour-quadrature evaluation of the phi functions.
    """

    def __init__(self, grid: Grid, linear_symbol, nonlinear, dt: float,
                 dt_max: float | None = None, n_contour: int = 32):
        if dt_max is not None and dt > dt_max:
            raise CflError(f"dt={dt:.3e} exceeds stability bound {dt_max:.3e}")
        self.grid = grid
        self.nonlinear = nonlinear
        self.dt = dt
        L = np.asarray(linear_symbol, dtype=complex)
        self.exp_full = np.exp(dt * L)
        self.exp_half = np.exp(0.5 * dt * L)
        # full-circle contour: the symbol is complex (dispersive), so the
        # half-circle-plus-real-part shortcut for real symbols does not apply
        roots = np.exp(2j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
        lr = dt * L[:, None] + roots[None, :]
        elr = np.exp(lr)
        self.f0 = dt * np.mean((np.exp(lr / 2.0) - 1.0) / lr, axis=1)
        self.f1 = dt * np.mean((-4.0 - lr + elr * (4.0 - 3.0 * lr + lr ** 2)) / lr ** 3, axis=1)
        self.f2 = dt * np.mean((2.0 + lr + elr * (lr - 2.0)) / lr ** 3, axis=1)
        self.f3 = dt * np.mean((-4.0 - 3.0 * lr - lr ** 2 + elr * (4.0 - lr)) / lr ** 3, axis=1)

    def step(self, vhat: np.ndarray) -> np.ndarray:
        n0 = self.nonlinear(vhat)
        a = self.exp_half * vhat + self.f0 * n0
        na = self.nonlinear(a)
        b = self.exp_half * vhat + self.f0 * na
        nb = self.nonlinear(b)
        c = self.exp_half * a + self.f0 * (2.0 * nb - n0)
        nc = self.nonlinear(c)
        return self.exp_full * vhat + self.f1 * n0 + 2.0 * self.f2 * (na + nb) + self.f3 * nc


class Rk4Spectral:
    """Plain RK4 on the full spectral right-hand side (fallback scheme)."""

    def __init__(self, grid: Grid, linear_symbol, nonlinear, dt: float,
                 dt_max: float | None = None):
        if dt_max is not None and dt > dt_max:
            raise CflError(f"dt={dt:.3e} exceeds stability bound {dt_max:.3e}")
        self.grid = grid
        self.L = np.asarray(linear_symbol, dtype=complex)
        self.nonlinear = nonlinear
        self.dt = dt

    def _rhs(self, vhat):
        return self.L * vhat + self.nonlinear(vhat)

    def step(self, vhat: np.ndarray) -> np.ndarray:
        dt = self.dt
        k1 = self._rhs(vhat)
        k2 = self._rhs(vhat + 0.5 * dt * k1)
        k3 = self._rhs(vhat + 0.5 * dt * k2)
        k4 = self._rhs(vhat + dt * k3)
        return vhat + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def etdrk4_step(grid: Grid, q, nonlinear, linear_symbol, dt: float,
                dt_max: float | None = None) -> np.ndarray:
    """One ETDRK4 step on physical samples q (one-shot convenience form)."""
    stepper = Etdrk4(grid, linear_symbol, nonlinear, dt, dt_max=dt_max)
    vhat = np.fft.rfft(np.asarray(q, dtype=float))
    return np.fft.irfft(stepper.step(vhat), n=grid.n)
