"""Composite verification suite.

Each criterion is a self-contained check with pinned tolerances, usable from
the CLI (`verify --suite ...`) and from the test suite.  Analytic families
(solitons, circles, ellipses) provide the ground truth; symbolic identities
are checked exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import numpy as np

from . import backlund, flows, geometry, hamiltonian, hierarchy, numerics
from .backlund import SimpleFactor, TrivialSolution
from .diffpoly import DiffPoly
from .geometry import CurvatureField, PlaneCurve
from .numerics import Grid


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict = dc_field(default_factory=dict)
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}" + (f" ({self.detail})" if self.detail else "")


def _q(order=0):
    return DiffPoly.q(order)


def _frac(a, b):
    return Fraction(a, b)


# ---------------------------------------------------------------------------
# criterion 1: symbolic hierarchy
# ---------------------------------------------------------------------------


def criterion_symbolic() -> CheckResult:
    t0 = time.perf_counter()
    q, q1, q2, q3, q5 = _q(0), _q(1), _q(2), _q(3), _q(5)
    ok = True
    measured = {}

    ok &= hierarchy.flow_rhs(0) == q1
    ok &= hierarchy.flow_rhs(1) == _frac(1, 4) * (q3 - 6 * q * q1)
    ok &= hierarchy.flow_rhs(2) == _frac(1, 16) * (
        q5 - 10 * q * q3 - 20 * q1 * q2 + 30 * q * q * q1)

    table = hierarchy.generate(6)
    for j in range(6):
        ok &= table.a(j) == _frac(-1, 2) * table.c(j).derivative()

    ok &= (table.b(1) - table.c(2)) == _frac(1, 4) * (q2 - 2 * q * q)

    lp = hierarchy.lax_pair(1)
    z = DiffPoly.zero()
    one = DiffPoly.constant(1)
    expected_t = (
        ((_frac(1, 4) * q1, _frac(1, 4) * (q2 - 2 * q * q)),
         (_frac(-1, 2) * q, _frac(-1, 4) * q1)),
        ((z, _frac(1, 2) * q), (one, z)),
        ((z, one), (z, z)),
    )
    for got, want in zip(lp.t_part, expected_t):
        for r in range(2):
            for c in range(2):
                ok &= got[r][c] == want[r][c]
    ok &= lp.x_part[0] == ((z, q), (one, z))
    ok &= lp.x_part[1] == ((z, one), (z, z))

    elapsed = time.perf_counter() - t0
    measured["runtime_s"] = elapsed
    ok &= elapsed < 5.0
    return CheckResult("symbolic hierarchy: flows, table, Lax pair", bool(ok),
                       measured, f"runtime {elapsed:.2f}s < 5s")


def criterion_lenard() -> CheckResult:
    ok = True
    for j in range(4):
        gj = hierarchy.hamiltonian(j).gradient
        gj3 = hierarchy.hamiltonian(j + 1).gradient
        rhs = hierarchy.flow_rhs(j)
        ok &= hierarchy.poisson_apply("L3", gj) == rhs
        ok &= hierarchy.poisson_apply("L1", gj3) == rhs
    return CheckResult("Lenard chain: L3 grad H = L1 grad H' = flow (j <= 3)",
                       bool(ok), {}, "exact identities")


# ---------------------------------------------------------------------------
# criterion 3: one-soliton pseudo-spectral run
# ---------------------------------------------------------------------------


def criterion_soliton_run() -> CheckResult:
    t0 = time.perf_counter()
    grid = Grid(n=1024, period=60.0)
    center = 30.0
    xs = grid.nodes
    q0 = CurvatureField(grid=grid, q=-2.0 / np.cosh(xs - center) ** 2)
    traj = flows.evolve_q(q0, j=1, T=1.0, snapshots=11)
    err = 0.0
    for t, st in zip(traj.times, traj.states):
        arg = (xs - center + t + grid.period / 2) % grid.period - grid.period / 2
        exact = -2.0 / np.cosh(arg) ** 2
        err = max(err, float(np.max(np.abs(st.q - exact))))
    drifts = flows.conservation_drift(traj.conservation)
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-5 and all(v <= 1e-6 for v in drifts.values()) and elapsed < 60.0
    return CheckResult("one-soliton run: closed form and conservation",
                       bool(ok),
                       {"linf_error": err, **drifts, "runtime_s": elapsed},
                       f"err {err:.2e} <= 1e-5, drifts <= 1e-6, {elapsed:.1f}s < 60s")


def criterion_circle_flow() -> CheckResult:
    grid = Grid(n=64, period=2 * np.pi)
    xs = grid.nodes
    circle = PlaneCurve(grid=grid, gamma=np.column_stack([np.cos(xs), np.sin(xs)]),
                        closed=True)
    tf = flows.evolve_curve_frame(circle, j=1, T=1.0, snapshots=6)
    td = flows.evolve_curve_direct(circle, j=1, T=1.0, snapshots=6)
    err_f = err_d = cross = 0.0
    for t, cf, cd in zip(tf.times, tf.states, td.states):
        exact = np.column_stack([np.cos(xs + 0.5 * t), np.sin(xs + 0.5 * t)])
        err_f = max(err_f, float(np.max(np.abs(cf.gamma - exact))))
        err_d = max(err_d, float(np.max(np.abs(cd.gamma - exact))))
        cross = max(cross, float(np.max(np.abs(cf.gamma - cd.gamma))))
    closure = max(tf.meta["closure_defects"])
    drift = max(max(tf.meta["normalization_drift"]), max(td.meta["normalization_drift"]))
    ok = err_f <= 1e-6 and err_d <= 1e-6 and cross <= 1e-6 \
        and closure <= 1e-6 and drift <= 1e-8
    return CheckResult("circle curve flow: both methods vs closed form",
                       bool(ok),
                       {"frame_error": err_f, "direct_error": err_d,
                        "cross_method": cross, "closure_defect": closure,
                        "normalization_drift": drift},
                       f"frame {err_f:.1e}, direct {err_d:.1e}, cross {cross:.1e}")


# ---------------------------------------------------------------------------
# criteria 5-7: Backlund block
# ---------------------------------------------------------------------------


def criterion_bt_certificate() -> CheckResult:
    k = 1.0
    seed = TrivialSolution()
    level = backlund.bt_apply(seed, SimpleFactor(0.0, k))
    rng = np.random.default_rng(7)
    xs = rng.uniform(-8, 8, 400)
    ts = rng.uniform(-2, 2, 400)
    th = k * xs + k ** 3 * ts
    closed_err = 0.0
    g = level.gamma(xs, ts)
    closed_err = max(closed_err, float(np.max(np.abs(g[..., 0] - np.tanh(th)))))
    closed_err = max(closed_err, float(np.max(np.abs(
        g[..., 1] - (xs * np.tanh(th) - 1.0 / k)))))
    closed_err = max(closed_err, float(np.max(np.abs(
        level.q(xs, ts) + 2.0 * k * k / np.cosh(th) ** 2))))
    closed_err = max(closed_err, float(np.max(np.abs(
        level.xi_tilde(xs, ts) - k * np.tanh(th)))))

    grid = Grid(n=2048, period=60.0, x0=-30.0)
    background = backlund.stationary_background(grid, t_max=0.13)
    cert = backlund.bt_certificate(background, SimpleFactor(0.0, k), t_center=0.08)
    residuals = {f"cert_{name}": val for name, val in cert.items()}
    ok = closed_err <= 1e-10 and all(v <= 1e-5 for v in cert.values())
    return CheckResult("Backlund certificate: printed soliton and residuals",
                       bool(ok),
                       {"closed_form_error": closed_err, **residuals},
                       f"closed {closed_err:.1e} <= 1e-10; residuals <= 1e-5")


def criterion_bt_crosscheck() -> CheckResult:
    worst = 0.0
    # trivial background, carried numerically
    grid = Grid(n=512, period=40.0, x0=-20.0)
    bg = backlund.stationary_background(grid, t_max=0.2)
    times = [0.0, 0.1, 0.2]
    k, xi = 1.0, 0.0
    dressed = backlund.bt_apply(bg, SimpleFactor(xi, k), times=times)
    ode = backlund.bt_ode_solve(bg, k, xi, times)
    worst = max(worst, float(np.max(np.abs(dressed.xi - ode.xi_tilde))))

    # numeric soliton background
    grid2 = Grid(n=1024, period=60.0)
    xs = grid2.nodes
    q0 = CurvatureField(grid=grid2, q=-2.0 / np.cosh(xs - 30.0) ** 2)
    traj = flows.evolve_q(q0, j=1, T=0.2, snapshots=3, keep_dense=True)
    bg2 = backlund.NumericKdvSolution(traj.dense)
    k2 = 1.4
    dressed2 = backlund.bt_apply(bg2, SimpleFactor(0.0, k2), times=list(traj.times))
    ode2 = backlund.bt_ode_solve(bg2, k2, 0.0, list(traj.times))
    worst = max(worst, float(np.max(np.abs(dressed2.xi - ode2.xi_tilde))))
    ok = worst <= 1e-6
    return CheckResult("Backlund cross-check: frame vs first-order system",
                       bool(ok), {"max_disagreement": worst},
                       f"max {worst:.2e} <= 1e-6")


def criterion_permutability() -> CheckResult:
    seed = TrivialSolution()
    xi1, xi2, k1, k2 = 1.0, 0.0, 1.0, 2.0
    eta1 = -xi2 + (k1 ** 2 - k2 ** 2) / (xi1 - xi2)
    eta2 = -xi1 + (k1 ** 2 - k2 ** 2) / (xi1 - xi2)
    rng = np.random.default_rng(11)
    xs = rng.uniform(-3, 3, 2000)
    ts = rng.uniform(-1, 1, 2000)
    first = backlund.bt_apply(seed, SimpleFactor(xi1, k1))
    second = backlund.bt_apply(seed, SimpleFactor(xi2, k2))
    # the composed family has a pole locus; compare where it is finite
    keep = np.abs(first.xi_tilde(xs, ts) - second.xi_tilde(xs, ts)) > 0.2
    xs, ts = xs[keep], ts[keep]
    chain_a = backlund.bt_apply(first, SimpleFactor(eta2, k2))
    chain_b = backlund.bt_apply(second, SimpleFactor(eta1, k1))
    order_gap = float(np.max(np.abs(chain_a.q(xs, ts) - chain_b.q(xs, ts))))

    algebra = backlund.permute(first, second)
    algebra_gap = float(np.max(np.abs(algebra.q(xs, ts) - chain_a.q(xs, ts))))

    # printed two-soliton family from the pure chain (xi = 0, k2 > k1 > 0)
    rng2 = np.random.default_rng(13)
    xs2 = rng2.uniform(-6, 6, 1000)
    ts2 = rng2.uniform(-2, 2, 1000)
    ka, kb = 1.0, 2.0
    chain = backlund.soliton_chain([(0.0, ka), (0.0, kb)])
    m1 = ka * xs2 + ka ** 3 * ts2
    m2 = kb * xs2 + kb ** 3 * ts2
    num = -2.0 * (ka * kb * np.sinh(m1) * np.cosh(m1) * np.cosh(m2)
                  - kb ** 2 * np.sinh(m2) * np.cosh(m1) ** 2
                  + ka ** 2 * np.sinh(m2))
    den = np.cosh(m1) * ((kb - ka) * np.cosh(m1 + m2) + (ka + kb) * np.cosh(m1 - m2))
    printed_gap = float(np.max(np.abs(chain.xi_tilde(xs2, ts2) - num / den)))

    scan_x = np.linspace(-25, 25, 100)
    scan_t = np.linspace(-6, 6, 100)
    X, T = np.meshgrid(scan_x, scan_t)
    M1 = ka * X + ka ** 3 * T
    M2 = kb * X + kb ** 3 * T
    den_scan = np.cosh(M1) * ((kb - ka) * np.cosh(M1 + M2)
                              + (ka + kb) * np.cosh(M1 - M2))
    den_min = float(np.min(den_scan))

    ok = order_gap <= 1e-8 and algebra_gap <= 1e-8 and printed_gap <= 1e-10 \
        and den_min > 0.0
    return CheckResult("permutability: composition orders and printed 2-soliton",
                       bool(ok),
                       {"order_gap": order_gap, "algebra_gap": algebra_gap,
                        "printed_formula_gap": printed_gap,
                        "denominator_min": den_min},
                       f"orders {order_gap:.1e}, printed {printed_gap:.1e}")


# ---------------------------------------------------------------------------
# criteria 8-9: geometry and Hamiltonian structure
# ---------------------------------------------------------------------------


def criterion_geometry() -> CheckResult:
    measured = {}
    s = (2 * np.pi / 400) * np.arange(400)
    ellipse = np.column_stack([np.cos(s), 2.0 * np.sin(s)])
    curve = geometry.reparametrize(ellipse, n=256)
    measured["ellipse_period_error"] = abs(curve.grid.period - 4 * np.pi)
    qf = geometry.curvature(curve)
    measured["ellipse_q_error"] = float(np.max(np.abs(qf.q + 0.25)))

    rebuilt, _ = geometry.reconstruct(qf, geometry.frame(curve).samples[0])
    measured["roundtrip_error"] = float(np.max(np.abs(rebuilt.gamma - curve.gamma)))

    # wobbly closed curve: a generic holonomy-identity curvature
    wob = np.column_stack([(1 + 0.1 * np.cos(3 * s)) * np.cos(s),
                           (1 + 0.1 * np.cos(3 * s)) * np.sin(s)])
    wcurve = geometry.reparametrize(wob, n=256)
    wq = geometry.curvature(wcurve)
    wre, _ = geometry.reconstruct(wq, geometry.frame(wcurve).samples[0])
    measured["wobbly_roundtrip_error"] = float(np.max(np.abs(wre.gamma - wcurve.gamma)))

    g1 = Grid(n=256, period=2 * np.pi)
    hol1 = geometry.holonomy(CurvatureField(grid=g1, q=-np.ones(256)))
    measured["holonomy_circle_error"] = float(np.max(np.abs(hol1.matrix - np.eye(2))))
    hol0 = geometry.holonomy(CurvatureField(grid=g1, q=np.zeros(256)))
    expected = np.array([[1.0, 0.0], [2 * np.pi, 1.0]])
    measured["holonomy_line_error"] = float(np.max(np.abs(hol0.matrix - expected)))

    ok = (measured["ellipse_period_error"] <= 1e-8
          and measured["ellipse_q_error"] <= 1e-8
          and measured["roundtrip_error"] <= 1e-7
          and measured["wobbly_roundtrip_error"] <= 1e-7
          and measured["holonomy_circle_error"] <= 1e-8
          and measured["holonomy_line_error"] <= 1e-8)
    return CheckResult("geometry roundtrips: ellipse, reconstruction, holonomy",
                       bool(ok), measured,
                       f"roundtrip {measured['roundtrip_error']:.1e} <= 1e-7")


def criterion_hamiltonian_suite() -> CheckResult:
    measured = {}
    grid = Grid(n=256, period=2 * np.pi)
    xs = grid.nodes
    circle = PlaneCurve(grid=grid, gamma=np.column_stack([np.cos(xs), np.sin(xs)]),
                        closed=True)
    rng = np.random.default_rng(3)

    def random_scalar():
        out = np.zeros(grid.n)
        for mode in range(1, 5):
            out += rng.normal() * np.cos(mode * xs) + rng.normal() * np.sin(mode * xs)
        return out + rng.normal()

    skew = 0.0
    kernel = 0.0
    ratio_vals = []
    w3_gap = 0.0
    for _ in range(4):
        X = geometry.lift(random_scalar(), circle)
        Y = geometry.lift(random_scalar(), circle)
        for form in ("pinkall_w", "w3", "w5"):
            rep = hamiltonian.pairing(form, circle, X, Y)
            skew = max(skew, rep.skew_defect)
            kernel = max(kernel, max(v for _, v in rep.degenerate_directions_checked))
        w5 = hamiltonian.pairing("w5", circle, X, Y).value
        w = hamiltonian.pairing("pinkall_w", circle, X, Y).value
        if abs(w) > 1e-9:
            ratio_vals.append(w5 / w)
        geo = hamiltonian.pairing("w3", circle, X, Y, variant="geometric").value
        op = hamiltonian.pairing("w3", circle, X, Y, variant="operator").value
        w3_gap = max(w3_gap, abs(geo - op))
    measured["skew_defect"] = skew
    measured["kernel_defect"] = kernel
    measured["w3_form_gap"] = w3_gap
    ratios = np.asarray(ratio_vals)
    measured["w5_over_w_mean"] = float(np.mean(ratios))
    measured["w5_over_w_spread"] = float(np.max(np.abs(ratios - ratios[0])))

    # gradients on a generic smooth field
    q = CurvatureField(grid=grid, q=0.3 * np.sin(xs) + 0.1 * np.cos(2 * xs) - 0.2)
    v = 0.2 * np.cos(xs) - 0.1 * np.sin(3 * xs)
    g_res = 0.0
    for j in range(3):
        chk = hamiltonian.gradient_check(j, q, v)
        g_res = max(g_res, chk.functional_residual)
    measured["gradient_residual"] = g_res

    # curve-space pullback on the circle
    qc = geometry.curvature(circle)
    chk = hamiltonian.gradient_check(1, qc, v, curve=circle, xi=np.sin(2 * xs))
    measured["pullback_residual"] = chk.pullback_residual

    ok = (skew <= 1e-10 and kernel <= 1e-9 and w3_gap <= 1e-9
          and abs(measured["w5_over_w_mean"] + 4.0) <= 1e-9
          and measured["w5_over_w_spread"] <= 1e-9
          and g_res <= 1e-6 and measured["pullback_residual"] <= 1e-5)
    return CheckResult("Hamiltonian suite: skewness, kernels, forms, gradients",
                       bool(ok), measured,
                       f"skew {skew:.1e}, gradients {g_res:.1e}")


# ---------------------------------------------------------------------------
# criterion 10: deterministic CLI output
# ---------------------------------------------------------------------------


def criterion_determinism(workdir) -> CheckResult:
    import filecmp
    import pathlib

    from . import cli

    base = pathlib.Path(workdir)
    digests = []
    for tag in ("a", "b"):
        out = base / f"run_{tag}"
        rc = cli.main(["evolve", "--input", "builtin:circle", "--flow", "3",
                       "--T", "0.2", "--n", "64", "--snapshots", "3",
                       "--out", str(out)])
        if rc != 0:
            return CheckResult("determinism: byte-identical reruns", False,
                               {}, f"evolve exited {rc}")
        rc = cli.main(["hierarchy", "--order", "3", "--format", "json",
                       "--out", str(out / "hierarchy.json")])
        if rc != 0:
            return CheckResult("determinism: byte-identical reruns", False,
                               {}, f"hierarchy exited {rc}")
        digests.append(sorted(
            p.name for p in out.iterdir() if p.suffix in (".csv", ".json")))
    run_a, run_b = base / "run_a", base / "run_b"
    same = True
    compared = 0
    for name in digests[0]:
        if name == "manifest.json":
            continue  # records wall-clock; excluded from the byte guarantee
        same &= filecmp.cmp(run_a / name, run_b / name, shallow=False)
        compared += 1
    return CheckResult("determinism: byte-identical reruns", bool(same),
                       {"files_compared": compared},
                       f"{compared} data files byte-identical")


CRITERIA = {
    1: ("symbolic", criterion_symbolic),
    2: ("symbolic", criterion_lenard),
    3: ("flows", criterion_soliton_run),
    4: ("flows", criterion_circle_flow),
    5: ("backlund", criterion_bt_certificate),
    6: ("backlund", criterion_bt_crosscheck),
    7: ("backlund", criterion_permutability),
    8: ("geometry", criterion_geometry),
    9: ("hamiltonian", criterion_hamiltonian_suite),
    10: ("determinism", criterion_determinism),
}


def run_suite(suite: str = "all", workdir=None) -> list:
    """Run a named group of criteria; returns the CheckResults in order."""
    results = []
    for idx in sorted(CRITERIA):
        group, fn = CRITERIA[idx]
        if suite not in ("all", group):
            continue
        if idx == 10:
            if workdir is None:
                import tempfile
                with tempfile.TemporaryDirectory() as tmp:
                    results.append(fn(tmp))
            else:
                results.append(fn(workdir))
        else:
            results.append(fn())
    return results
