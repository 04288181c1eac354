"""Pairings, conserved functionals, gradient and pullback checks."""

import numpy as np
import pytest

from affinekdv import flows, geometry as ge, hamiltonian as ha
from affinekdv.errors import OpenCurve
from affinekdv.geometry import CurvatureField, PlaneCurve
from affinekdv.numerics import Grid


def circle_curve(n=256):
    g = Grid(n=n, period=2 * np.pi)
    x = g.nodes
    return PlaneCurve(grid=g, gamma=np.column_stack([np.cos(x), np.sin(x)]),
                      closed=True)


def wobbly_curve(n=256):
    s = (2 * np.pi / 512) * np.arange(512)
    pts = np.column_stack([(1 + 0.07 * np.cos(3 * s)) * np.cos(s),
                           (1 + 0.07 * np.cos(3 * s)) * np.sin(s)])
    return ge.reparametrize(pts, n=n)


class TestPairings:
    def setup_method(self):
        self.c = circle_curve()
        self.x = self.c.grid.nodes

    def test_translation_form_on_circle(self):
        X = ge.lift(np.sin(self.x), self.c)
        Y = ge.lift(np.cos(self.x), self.c)
        rep = ha.pairing("w5", self.c, X, Y)
        assert abs(rep.value - 4 * np.pi) < 1e-10
        assert rep.skew_defect < 1e-10

    def test_constant_direction_annihilates_w5(self):
        X = ge.lift(np.ones(self.c.grid.n), self.c)
        Y = ge.lift(np.sin(2 * self.x) + 0.3, self.c)
        rep = ha.pairing("w5", self.c, X, Y)
        assert abs(rep.value) < 1e-10

    def test_third_order_kernel_on_circle(self):
        # at q = -1 the combination cos(2x) solves the kernel equation
        X = ge.lift(np.cos(2 * self.x), self.c)
        Y = ge.lift(np.sin(3 * self.x) - 0.2 * np.cos(self.x), self.c)
        for variant in ("operator", "geometric"):
            rep = ha.pairing("w3", self.c, X, Y, variant=variant)
            assert abs(rep.value) < 1e-9

    def test_w3_variants_agree(self):
        c = wobbly_curve()
        x = c.grid.nodes
        rng = np.random.default_rng(2)
        xi = sum(rng.normal() * np.sin(m * x + rng.uniform(0, 6)) for m in range(1, 5))
        eta = sum(rng.normal() * np.sin(m * x + rng.uniform(0, 6)) for m in range(1, 5))
        X, Y = ge.lift(xi, c), ge.lift(eta, c)
        a = ha.pairing("w3", c, X, Y, variant="operator").value
        b = ha.pairing("w3", c, X, Y, variant="geometric").value
        assert abs(a - b) < 1e-9

    def test_all_forms_skew(self):
        c = wobbly_curve()
        x = c.grid.nodes
        rng = np.random.default_rng(3)
        for _ in range(3):
            xi = sum(rng.normal() * np.cos(m * x + rng.uniform(0, 6)) for m in range(1, 5))
            eta = sum(rng.normal() * np.cos(m * x + rng.uniform(0, 6)) for m in range(1, 5))
            X, Y = ge.lift(xi, c), ge.lift(eta, c)
            for form in ("pinkall_w", "w3", "w5"):
                assert ha.pairing(form, c, X, Y).skew_defect < 1e-10

    def test_kernel_directions_annihilate_w3_on_generic_curve(self):
        c = wobbly_curve()
        x = c.grid.nodes
        Y = ge.lift(np.sin(2 * x) - 0.4 * np.cos(5 * x), c)
        X = ge.lift(np.cos(x), c)
        rep = ha.pairing("w3", c, X, Y)
        assert max(v for _, v in rep.degenerate_directions_checked) < 1e-9

    def test_w5_is_minus_four_times_translation_form(self):
        c = wobbly_curve()
        x = c.grid.nodes
        rng = np.random.default_rng(5)
        ratios = []
        for _ in range(5):
            xi = sum(rng.normal() * np.sin(m * x + rng.uniform(0, 6)) for m in range(1, 4))
            eta = sum(rng.normal() * np.sin(m * x + rng.uniform(0, 6)) for m in range(1, 4))
            X, Y = ge.lift(xi, c), ge.lift(eta, c)
            w5 = ha.pairing("w5", c, X, Y).value
            w = ha.pairing("pinkall_w", c, X, Y).value
            if abs(w) > 1e-8:
                ratios.append(w5 / w)
        assert all(abs(r + 4.0) < 1e-9 for r in ratios)

    def test_open_curve_rejected(self):
        g = Grid(n=64, period=4.0)
        x = g.nodes
        line = PlaneCurve(grid=g, gamma=np.column_stack([np.ones_like(x), x]),
                          closed=False)
        X = ge.lift(np.sin(x), line)
        with pytest.raises(OpenCurve):
            ha.pairing("w5", line, X, X)

    def test_unknown_form_rejected(self):
        X = ge.lift(np.sin(self.x), self.c)
        with pytest.raises(ValueError):
            ha.pairing("w7", self.c, X, X)


class TestConservedReport:
    def test_stationary_field_has_zero_drift(self):
        g = Grid(n=128, period=2 * np.pi)
        field = CurvatureField(grid=g, q=-np.ones(128))
        traj = flows.evolve_q(field, 1, 0.5, snapshots=4)
        rep = ha.conserved_report(traj)
        assert all(v < 1e-12 for v in rep.drifts.values())

    def test_soliton_functional_values_and_drift(self):
        g = Grid(n=1024, period=60.0)
        x = g.nodes
        field = CurvatureField(grid=g, q=-2.0 / np.cosh(x - 30.0) ** 2)
        assert abs(ha.functional_value(1, field) - 8.0 / 3.0) < 1e-6
        assert abs(ha.functional_value(0, field) - 8.0) < 1e-6
        assert abs(ha.functional_value(2, field) - 1.6) < 1e-6
        traj = flows.evolve_q(field, 1, 1.0, snapshots=5)
        rep = ha.conserved_report(traj)
        assert all(v <= 1e-6 for v in rep.drifts.values())

    def test_accepts_curve_trajectories(self):
        c = circle_curve(64)
        traj = flows.evolve_curve_frame(c, 1, 0.3, snapshots=3)
        rep = ha.conserved_report(traj)
        assert rep.values.shape == (3, 3)
        assert abs(rep.values[0, 0] - 4 * np.pi) < 1e-9


class TestGradients:
    def setup_method(self):
        self.grid = Grid(n=256, period=2 * np.pi)
        x = self.grid.nodes
        self.field = CurvatureField(grid=self.grid,
                                    q=0.3 * np.sin(x) + 0.1 * np.cos(2 * x) - 0.4)
        self.v = 0.2 * np.cos(x) - 0.1 * np.sin(3 * x)

    def test_linear_functional_exact(self):
        chk = ha.gradient_check(0, self.field, self.v)
        assert chk.functional_residual < 1e-10

    def test_quadratic_functional(self):
        chk = ha.gradient_check(1, self.field, self.v)
        assert chk.functional_residual < 1e-7

    def test_cubic_functional(self):
        chk = ha.gradient_check(2, self.field, self.v)
        assert chk.functional_residual < 1e-6

    def test_pullback_on_circle(self):
        c = circle_curve()
        qc = ge.curvature(c)
        xi = np.sin(2 * c.grid.nodes)
        chk = ha.gradient_check(1, qc, self.v, curve=c, xi=xi)
        assert chk.pullback_residual < 1e-5

    def test_pullback_requires_direction(self):
        c = circle_curve()
        qc = ge.curvature(c)
        with pytest.raises(ValueError):
            ha.gradient_check(1, qc, self.v, curve=c)


class TestCurvatureVariation:
    def test_differential_is_minus_twice_third_operator(self):
        c = wobbly_curve()
        x = c.grid.nodes
        xi = np.sin(2 * x) + 0.3 * np.cos(x)
        assert ha.curvature_variation_residual(c, xi) < 1e-4

    def test_on_circle(self):
        c = circle_curve()
        xi = np.cos(3 * c.grid.nodes)
        assert ha.curvature_variation_residual(c, xi) < 1e-5


class TestHamiltonianConsistency:
    def test_flow_field_pairs_to_four_times_differential(self):
        # the third-order flow direction xi = -q/2 satisfies
        # w5(xi~, eta~) = 4 * d/ds H(gamma + s eta~) for H = (1/2) oint q
        c = wobbly_curve()
        grid = c.grid
        x = grid.nodes
        qf = ge.curvature(c)
        xi = -0.5 * qf.q
        X = ge.lift(xi, c)
        rng = np.random.default_rng(11)
        eps = 1e-6
        ratios = []
        for _ in range(4):
            eta = sum(rng.normal() * np.sin(m * x + rng.uniform(0, 6))
                      for m in range(1, 4))
            Y = ge.lift(eta, c)
            w5 = ha.pairing("w5", c, X, Y).value
            hplus = 0.5 * np.mean(ge.curvature(
                PlaneCurve(grid=grid, gamma=c.gamma + eps * Y.lifted,
                           closed=True)).q) * grid.period
            hminus = 0.5 * np.mean(ge.curvature(
                PlaneCurve(grid=grid, gamma=c.gamma - eps * Y.lifted,
                           closed=True)).q) * grid.period
            dh = (hplus - hminus) / (2 * eps)
            if abs(dh) > 1e-6:
                ratios.append(w5 / dh)
        assert len(ratios) >= 2
        assert all(abs(r - 4.0) < 1e-3 for r in ratios)
