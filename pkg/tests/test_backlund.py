"""Backlund transformations, permutability, and the soliton catalog."""

import numpy as np
import pytest

from affinekdv import backlund as bt
from affinekdv import flows, geometry as ge
from affinekdv.backlund import SimpleFactor, TrivialSolution
from affinekdv.errors import CoincidentFactors, SingularBT
from affinekdv.geometry import CurvatureField
from affinekdv.numerics import Grid

SEED = TrivialSolution()


class TestSimpleFactor:
    def test_determinant_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(8):
            xi, k, lam = rng.uniform(-2, 2), rng.uniform(0.3, 2), rng.uniform(-3, 3)
            r = SimpleFactor(xi, k).matrix(lam)
            assert abs(np.linalg.det(r) - (k * k - lam)) < 1e-12

    def test_inverse_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(8):
            xi, k, lam = rng.uniform(-2, 2), rng.uniform(0.3, 2), rng.uniform(-3, 3)
            prod = SimpleFactor(xi, k).matrix(lam) @ SimpleFactor(-xi, k).matrix(lam)
            assert np.max(np.abs(prod - (lam - k * k) * np.eye(2))) < 1e-12

    def test_specific_value(self):
        assert np.allclose(SimpleFactor(0.0, 1.0).matrix(0.0),
                           [[0.0, -1.0], [1.0, 0.0]])


class TestExtendedFrame:
    def test_trivial_closed_form(self):
        z = 1.3
        x, t = 0.7, -0.4
        E = SEED.frame(x, t, z * z)
        th = z * x + z ** 3 * t
        want = np.array([[np.cosh(th), z * np.sinh(th)],
                         [np.sinh(th) / z, np.cosh(th)]])
        assert np.max(np.abs(E - want)) < 1e-14

    def test_zero_parameter_limit(self):
        E = SEED.frame(2.5, 1.0, 0.0)
        assert np.max(np.abs(E - np.array([[1.0, 0.0], [2.5, 1.0]]))) < 1e-14

    def test_negative_parameter_is_rotation_like(self):
        E = SEED.frame(1.0, 0.5, -1.0)
        assert abs(np.linalg.det(E) - 1.0) < 1e-12

    def test_series_coefficient(self):
        x, t = 1.2, 0.7
        _, E1 = SEED.frame_dlam0(x, t)
        want = np.array([[x * x / 2, x], [t + x ** 3 / 6, x * x / 2]])
        assert np.max(np.abs(E1 - want)) < 1e-14

    def test_numeric_augmented_march_matches_series(self):
        grid = Grid(n=256, period=16.0, x0=-8.0)
        bg = bt.stationary_background(grid, t_max=0.2)
        E, E1 = bg.frame_path_dlam(0.0, 0.2)
        xs = grid.nodes
        wantE1 = np.stack([
            np.stack([xs ** 2 / 2, xs], axis=-1),
            np.stack([0.2 + xs ** 3 / 6, xs ** 2 / 2], axis=-1)], axis=1)
        assert np.max(np.abs(E1 - wantE1)) < 1e-8

    def test_path_independence_on_numeric_background(self):
        grid = Grid(n=512, period=60.0)
        x = grid.nodes
        q0 = CurvatureField(grid=grid, q=-2.0 / np.cosh(x - 30.0) ** 2)
        traj = flows.evolve_q(q0, 1, 0.2, snapshots=3, keep_dense=True)
        bg = bt.NumericKdvSolution(traj.dense)
        lam = 1.21
        node = 128
        a = bt.extended_frame_at(bg, lam, x[node], traj.times[-1], order="tx")
        b = bt.extended_frame_at(bg, lam, x[node], traj.times[-1], order="xt")
        scale = max(1.0, np.max(np.abs(a)))
        assert np.max(np.abs(a - b)) / scale < 1e-8


class TestBtApply:
    def test_stationary_seed_printed_family(self):
        k = 1.0
        lvl = bt.bt_apply(SEED, SimpleFactor(0.0, k))
        rng = np.random.default_rng(3)
        xs, ts = rng.uniform(-6, 6, 300), rng.uniform(-2, 2, 300)
        th = k * xs + k ** 3 * ts
        assert np.max(np.abs(lvl.xi_tilde(xs, ts) - k * np.tanh(th))) < 1e-12
        g = lvl.gamma(xs, ts)
        assert np.max(np.abs(g[..., 0] - np.tanh(th))) < 1e-12
        assert np.max(np.abs(g[..., 1] - (xs * np.tanh(th) - 1 / k))) < 1e-12
        assert np.max(np.abs(lvl.q(xs, ts) + 2 * k * k / np.cosh(th) ** 2)) < 1e-12

    def test_unit_determinant_identity(self):
        lvl = bt.bt_apply(SEED, SimpleFactor(0.0, 1.0))
        xs = np.linspace(-5, 5, 101)
        g = lvl.gamma(xs, 0.3)
        gx = lvl.gamma_x(xs, 0.3)
        det = g[..., 0] * gx[..., 1] - g[..., 1] * gx[..., 0]
        assert np.max(np.abs(det - 1.0)) < 1e-12

    def test_dressing_consistency(self):
        # first column of the dressed frame at lambda 0 is a fixed unimodular
        # multiple of the new curve
        k = 1.2
        lvl = bt.bt_apply(SEED, SimpleFactor(0.0, k))
        xs = np.linspace(-4, 4, 81)
        E0 = lvl.frame(xs, 0.2, 0.0)
        A = SimpleFactor(0.0, k).matrix(0.0) / k
        pred = np.einsum("ij,...j->...i", A, lvl.gamma(xs, 0.2))
        assert np.max(np.abs(E0[..., :, 0] - pred)) < 1e-12

    def test_certificate_residuals(self):
        grid = Grid(n=1024, period=60.0, x0=-30.0)
        background = bt.stationary_background(grid, t_max=0.13)
        cert = bt.bt_certificate(background, SimpleFactor(0.0, 1.0), t_center=0.08)
        assert all(v <= 1e-5 for v in cert.values())

    def test_singular_transformation_detected(self):
        # |xi| > k makes the frame denominator cross zero on the line
        grid = Grid(n=256, period=20.0, x0=-10.0)
        background = bt.stationary_background(grid, t_max=0.02)
        with pytest.raises(SingularBT):
            bt.NumericDressedSolution(background, SimpleFactor(2.0, 1.0), [0.0])
        # the pointwise guard fires when a sample lands on the crossing
        lvl = bt.bt_apply(SEED, SimpleFactor(2.0, 1.0))
        with pytest.raises(SingularBT):
            lvl.xi_tilde(np.array([np.arctanh(-0.5), 1.0]), 0.0)
        # and the lattice scan flags the family
        assert bt.singularity_scan(lvl, np.linspace(-5, 5, 401), [0.0])


class TestK0Variant:
    def test_zero_parameter_fixed_point(self):
        lvl = bt.bt_apply_k0(SEED, 0.0)
        xs = np.linspace(-3, 3, 61)
        g = lvl.gamma(xs, 0.4)
        assert np.max(np.abs(g - np.stack([np.ones_like(xs), xs], axis=-1))) < 1e-14
        assert np.max(np.abs(lvl.q(xs, 0.4))) < 1e-14

    def test_routes_through_bt_apply(self):
        lvl = bt.bt_apply(SEED, SimpleFactor(0.3, 0.0))
        assert isinstance(lvl, bt.K0DressedSolution)

    def test_rational_curvature(self):
        xi = 0.4
        lvl = bt.bt_apply_k0(SEED, xi)
        xs = np.linspace(-1.5, 1.5, 101)
        want = 2 * xi ** 2 / (1 + xi * xs) ** 2
        assert np.max(np.abs(lvl.q(xs, 0.0) - want)) < 1e-13

    def test_running_parameter_satisfies_first_order_system(self):
        xi = 0.4
        lvl = bt.bt_apply_k0(SEED, xi)
        xs = np.linspace(-1.5, 1.5, 2001)
        h = xs[1] - xs[0]
        xt = lvl.xi_tilde(xs, 0.1)
        xt_x = ge.fd_derivative(xt, h, 1)
        assert np.max(np.abs(xt_x + xt ** 2)) < 1e-7

    def test_curvature_oracle_on_numeric_seed(self):
        # k = 0 step evaluated with a numerically carried frame derivative
        grid = Grid(n=1024, period=24.0, x0=-12.0)
        bg = bt.stationary_background(grid, t_max=0.1)
        xi = 0.05  # pole at x = -20, outside the box
        t = 0.1
        E, E1 = bg.frame_path_dlam(0.0, t)
        gp = bg.gamma_slice(t)
        gpx = bg.gamma_x_slice(t)
        den = gp[:, 0] + xi * gp[:, 1]
        xt = (gpx[:, 0] + xi * gpx[:, 1]) / den
        first = -xt[:, None] * gp + gpx
        head = np.stack([first[:, 1], np.zeros_like(xt)], axis=-1)
        R0 = SimpleFactor(xi, 0.0).matrix(0.0)
        v1 = E1[:, 0, 0] * (-xt) + E1[:, 0, 1]
        v2 = E1[:, 1, 0] * (-xt) + E1[:, 1, 1]
        tail = np.stack([R0[0, 0] * v1 + R0[0, 1] * v2,
                         R0[1, 0] * v1 + R0[1, 1] * v2], axis=-1)
        gamma = head + tail
        from affinekdv.geometry import PlaneCurve, curvature
        curve = PlaneCurve(grid=grid, gamma=gamma, closed=False)
        q_curve = curvature(curve).q
        q_formula = 2 * xt ** 2
        assert np.max(np.abs(q_curve - q_formula)) < 1e-6

    def test_singular_locus_detected(self):
        lvl = bt.bt_apply_k0(SEED, 1.0)
        with pytest.raises(SingularBT):
            lvl.xi_tilde(np.linspace(-3, 3, 301), 0.0)  # pole at x = -1


class TestBtOdeSolve:
    def test_riccati_on_trivial_background(self):
        grid = Grid(n=512, period=30.0, x0=-15.0)
        bg = bt.stationary_background(grid, t_max=0.02)
        state = bt.bt_ode_solve(bg, 1.0, 0.0, [0.0])
        xs = grid.nodes
        assert np.max(np.abs(state.xi_tilde[0] - np.tanh(xs))) < 1e-8

    def test_time_equation_closed_form(self):
        # A = k tanh(k x + k^3 t) satisfies A_t = -k^2 (A^2 - k^2)
        k = 1.3
        xs = np.linspace(-3, 3, 101)
        t = 0.4
        A = k * np.tanh(k * xs + k ** 3 * t)
        lhs = k ** 4 / np.cosh(k * xs + k ** 3 * t) ** 2
        rhs = -k * k * (A ** 2 - k * k)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_agrees_with_frame_route_on_soliton_background(self):
        grid = Grid(n=1024, period=60.0)
        x = grid.nodes
        q0 = CurvatureField(grid=grid, q=-2.0 / np.cosh(x - 30.0) ** 2)
        traj = flows.evolve_q(q0, 1, 0.2, snapshots=3, keep_dense=True)
        bg = bt.NumericKdvSolution(traj.dense)
        k = 1.4
        dressed = bt.bt_apply(bg, SimpleFactor(0.0, k), times=list(traj.times))
        ode = bt.bt_ode_solve(bg, k, 0.0, list(traj.times))
        assert np.max(np.abs(dressed.xi - ode.xi_tilde)) < 1e-6

    def test_blowup_detected(self):
        grid = Grid(n=256, period=40.0, x0=-20.0)
        bg = bt.stationary_background(grid, t_max=0.02)
        with pytest.raises(SingularBT):
            bt.bt_ode_solve(bg, 1.0, 3.0, [0.0])  # |xi0| > k blows up along x


class TestPermutability:
    def test_eta_constants(self):
        xi1, xi2, k1, k2 = 1.0, 0.0, 1.0, 2.0
        eta1 = -xi2 + (k1 ** 2 - k2 ** 2) / (xi1 - xi2)
        eta2 = -xi1 + (k1 ** 2 - k2 ** 2) / (xi1 - xi2)
        assert eta1 == -3.0 and eta2 == -4.0
        lam = 0.7321
        lhs = SimpleFactor(eta2, k2).matrix(lam) @ SimpleFactor(xi1, k1).matrix(lam)
        rhs = SimpleFactor(eta1, k1).matrix(lam) @ SimpleFactor(xi2, k2).matrix(lam)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_composition_orders_agree(self):
        # the composed family has a pole locus (as any generic two-step
        # composition does); compare away from it, where values are finite
        xi1, xi2, k1, k2 = 1.0, 0.0, 1.0, 2.0
        eta1, eta2 = -3.0, -4.0
        rng = np.random.default_rng(7)
        xs, ts = rng.uniform(-3, 3, 2000), rng.uniform(-1, 1, 2000)
        first = bt.bt_apply(SEED, SimpleFactor(xi1, k1))
        second = bt.bt_apply(SEED, SimpleFactor(xi2, k2))
        gap = first.xi_tilde(xs, ts) - second.xi_tilde(xs, ts)
        keep = np.abs(gap) > 0.2
        assert keep.sum() > 1000
        a = bt.bt_apply(first, SimpleFactor(eta2, k2))
        b = bt.bt_apply(second, SimpleFactor(eta1, k1))
        qa = a.q(xs[keep], ts[keep])
        qb = b.q(xs[keep], ts[keep])
        assert np.max(np.abs(qa - qb)) < 1e-8

    def test_algebraic_composition_matches_chain(self):
        xi1, xi2, k1, k2 = 1.0, 0.0, 1.0, 2.0
        first = bt.bt_apply(SEED, SimpleFactor(xi1, k1))
        second = bt.bt_apply(SEED, SimpleFactor(xi2, k2))
        combo = bt.permute(first, second)
        chain = bt.bt_apply(first, SimpleFactor(-4.0, k2))
        rng = np.random.default_rng(8)
        xs, ts = rng.uniform(-3, 3, 600), rng.uniform(-1, 1, 600)
        gap = first.xi_tilde(xs, ts) - second.xi_tilde(xs, ts)
        keep = np.abs(gap) > 0.2
        xs, ts = xs[keep], ts[keep]
        assert np.max(np.abs(combo.q(xs, ts) - chain.q(xs, ts))) < 1e-9
        g1 = combo.gamma(xs, ts)
        g2 = chain.gamma(xs, ts)
        assert np.max(np.abs(g1 - g2)) < 1e-10

    def test_coincident_factors_rejected(self):
        first = bt.bt_apply(SEED, SimpleFactor(0.0, 1.0))
        second = bt.bt_apply(SEED, SimpleFactor(0.0, 2.0))
        combo = bt.permute(first, second)
        with pytest.raises(CoincidentFactors):
            combo.xi_tilde(np.array([0.0]), np.array([0.0]))  # xt1 = xt2 = 0 there

    def test_numeric_composition(self):
        # modest box: forming y from hyperbolically grown frames loses
        # precision like eps * exp(2k|x|) once xi != 0; k = 2 legs need a
        # denser carrier and sweep than the defaults
        grid = Grid(n=256, period=16.0, x0=-8.0)
        bg = bt.stationary_background(grid, t_max=0.04, dt=0.00125, substeps=16)
        t = [0.04]
        first = bt.bt_apply(bg, SimpleFactor(1.0, 1.0), times=t)
        second = bt.bt_apply(bg, SimpleFactor(0.0, 2.0), times=t)
        x12, q12 = bt.permuted_arrays(first, second, 0.04)
        ana = bt.permute(bt.bt_apply(SEED, SimpleFactor(1.0, 1.0)),
                         bt.bt_apply(SEED, SimpleFactor(0.0, 2.0)))
        want = ana.q(grid.nodes, 0.04)
        # the composition divides by xi1 - xi2; compare well away from its zero
        keep = np.abs(first.xi[0] - second.xi[0]) > 1.0
        assert keep.sum() > grid.n // 3
        assert np.max(np.abs(q12[keep] - want[keep])) < 1e-7


class TestSolitonCurves:
    def test_one_level_at_origin(self):
        gamma, _ = bt.soliton_curve([(0.0, 1.0)], 0.0, 0.0)
        assert np.max(np.abs(gamma - np.array([0.0, -1.0]))) < 1e-14

    def test_one_level_curvature(self):
        k = 1.7
        xs = np.linspace(-4, 4, 101)
        _, q = bt.soliton_curve([(0.0, k)], xs, 0.3)
        th = k * xs + k ** 3 * 0.3
        assert np.max(np.abs(q + 2 * k * k / np.cosh(th) ** 2)) < 1e-12

    def test_two_level_matches_printed_formula(self):
        k1, k2 = 1.0, 2.0
        rng = np.random.default_rng(13)
        xs, ts = rng.uniform(-6, 6, 1000), rng.uniform(-2, 2, 1000)
        chain = bt.soliton_chain([(0.0, k1), (0.0, k2)])
        m1 = k1 * xs + k1 ** 3 * ts
        m2 = k2 * xs + k2 ** 3 * ts
        num = -2 * (k1 * k2 * np.sinh(m1) * np.cosh(m1) * np.cosh(m2)
                    - k2 ** 2 * np.sinh(m2) * np.cosh(m1) ** 2
                    + k1 ** 2 * np.sinh(m2))
        den = np.cosh(m1) * ((k2 - k1) * np.cosh(m1 + m2)
                             + (k1 + k2) * np.cosh(m1 - m2))
        assert np.max(np.abs(chain.xi_tilde(xs, ts) - num / den)) < 1e-10
        q1 = -2 * k1 ** 2 / np.cosh(m1) ** 2
        want_q = -q1 + 2 * ((num / den) ** 2 - k2 ** 2)
        assert np.max(np.abs(chain.q(xs, ts) - want_q)) < 1e-9

    def test_two_level_curve_is_normalized(self):
        chain = bt.soliton_chain([(0.0, 1.0), (0.0, 2.0)])
        xs = np.linspace(-5, 5, 201)
        g = chain.gamma(xs, 0.2)
        gx = chain.gamma_x(xs, 0.2)
        det = g[..., 0] * gx[..., 1] - g[..., 1] * gx[..., 0]
        assert np.max(np.abs(det - 1.0)) < 1e-10

    def test_family_metadata(self):
        meta = bt.soliton_family([(0.0, 1.0), (0.0, 2.0)])
        assert meta["smooth_certified"]
        assert not meta["singular_flag"]
        bad = bt.soliton_family([(0.0, 2.0), (0.0, 1.0)])
        assert not bad["smooth_certified"]
        assert bad["singular_flag"]
