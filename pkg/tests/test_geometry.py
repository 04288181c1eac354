"""Arclength normalization, curvature, reconstruction, holonomy, lifts."""

import numpy as np
import pytest

from affinekdv import geometry as ge
from affinekdv.errors import DegenerateCurve, NotNormalized
from affinekdv.geometry import CurvatureField, PlaneCurve
from affinekdv.numerics import Grid


def circle_curve(n=256):
    g = Grid(n=n, period=2 * np.pi)
    x = g.nodes
    return PlaneCurve(grid=g, gamma=np.column_stack([np.cos(x), np.sin(x)]),
                      closed=True)


class TestReparametrize:
    def test_unit_circle_unchanged(self):
        s = (2 * np.pi / 300) * np.arange(300)
        c = ge.reparametrize(np.column_stack([np.cos(s), np.sin(s)]), n=256)
        assert abs(c.grid.period - 2 * np.pi) < 1e-12
        x = c.grid.nodes
        assert np.max(np.abs(c.gamma - np.column_stack([np.cos(x), np.sin(x)]))) < 1e-10

    def test_ellipse_doubles_the_period(self):
        s = (2 * np.pi / 300) * np.arange(300)
        c = ge.reparametrize(np.column_stack([np.cos(s), 2 * np.sin(s)]), n=256)
        assert abs(c.grid.period - 4 * np.pi) < 1e-10
        q = ge.curvature(c).q
        assert np.max(np.abs(q + 0.25)) < 1e-10

    def test_hyperbola_branch_already_normalized(self):
        s = np.linspace(-2.0, 2.0, 400)
        pts = np.column_stack([np.cosh(s), np.sinh(s)])
        c = ge.reparametrize(pts, s=s, closed=False, n=256)
        assert not c.closed
        assert abs((c.grid.nodes[-1] - c.grid.nodes[0]) - 4.0) < 1e-8
        q = ge.curvature(c).q
        assert np.max(np.abs(q - 1.0)) < 1e-8

    def test_orientation_flip(self):
        s = (2 * np.pi / 300) * np.arange(300)
        cw = np.column_stack([np.cos(-s), np.sin(-s)])
        c = ge.reparametrize(cw, n=128)
        assert c.normalization_defect() < 1e-8

    def test_degenerate_curve_rejected(self):
        # a line through the origin has det(gamma, gamma_s) = 0
        s = np.linspace(1.0, 2.0, 100)
        pts = np.column_stack([s, s])
        with pytest.raises(DegenerateCurve):
            ge.reparametrize(pts, s=s, closed=False)


class TestCurvature:
    def test_unit_circle(self):
        q = ge.curvature(circle_curve()).q
        assert np.max(np.abs(q + 1.0)) < 1e-10

    def test_line_has_zero_curvature(self):
        g = Grid(n=128, period=4.0)
        x = g.nodes
        line = PlaneCurve(grid=g, gamma=np.column_stack([np.ones_like(x), x]),
                          closed=False)
        assert np.max(np.abs(ge.curvature(line).q)) < 1e-9

    def test_soliton_curve(self):
        k, t = 1.0, 0.2
        g = Grid(n=1024, period=30.0, x0=-15.0)
        x = g.nodes
        th = k * x + k ** 3 * t
        gamma = np.column_stack([np.tanh(th), x * np.tanh(th) - 1.0 / k])
        c = PlaneCurve(grid=g, gamma=gamma, closed=False)
        q = ge.curvature(c).q
        assert np.max(np.abs(q + 2 * k * k / np.cosh(th) ** 2)) < 1e-6

    def test_not_normalized_rejected(self):
        g = Grid(n=64, period=2 * np.pi)
        x = g.nodes
        bad = PlaneCurve(grid=g, gamma=np.column_stack([2 * np.cos(x), np.sin(x)]),
                         closed=True)
        with pytest.raises(NotNormalized):
            ge.curvature(bad)


class TestReconstruct:
    def test_zero_curvature_gives_line(self):
        g = Grid(n=128, period=4.0)
        field = CurvatureField(grid=g, q=np.zeros(128))
        curve, _ = ge.reconstruct(field, np.eye(2))
        x = g.nodes
        assert np.max(np.abs(curve.gamma - np.column_stack([np.ones_like(x), x]))) < 1e-10

    def test_constant_negative_curvature_gives_circle(self):
        g = Grid(n=256, period=2 * np.pi)
        field = CurvatureField(grid=g, q=-np.ones(256))
        curve, _ = ge.reconstruct(field, np.eye(2))
        x = g.nodes
        assert np.max(np.abs(curve.gamma - np.column_stack([np.cos(x), np.sin(x)]))) < 1e-8

    def test_roundtrip_on_wobbly_closed_curve(self):
        s = (2 * np.pi / 512) * np.arange(512)
        pts = np.column_stack([(1 + 0.1 * np.cos(3 * s)) * np.cos(s),
                               (1 + 0.1 * np.cos(3 * s)) * np.sin(s)])
        c = ge.reparametrize(pts, n=256)
        qf = ge.curvature(c)
        rebuilt, _ = ge.reconstruct(qf, ge.frame(c).samples[0])
        assert np.max(np.abs(rebuilt.gamma - c.gamma)) < 1e-7
        assert np.max(np.abs(ge.curvature(rebuilt).q - qf.q)) < 1e-7

    def test_frame_determinant_preserved(self):
        g = Grid(n=256, period=2 * np.pi)
        field = CurvatureField(grid=g, q=-1 + 0.3 * np.sin(g.nodes))
        _, path = ge.reconstruct(field, np.eye(2))
        assert path.det_drift() < 1e-8

    def test_bad_initial_frame_rejected(self):
        g = Grid(n=64, period=2 * np.pi)
        field = CurvatureField(grid=g, q=np.zeros(64))
        with pytest.raises(NotNormalized):
            ge.reconstruct(field, 2 * np.eye(2))


class TestEquivariance:
    def test_curvature_is_unimodular_invariant(self):
        rng = np.random.default_rng(9)
        s = (2 * np.pi / 512) * np.arange(512)
        pts = np.column_stack([(1 + 0.05 * np.sin(2 * s)) * np.cos(s),
                               (1 + 0.05 * np.sin(2 * s)) * np.sin(s)])
        c = ge.reparametrize(pts, n=256)
        q0 = ge.curvature(c).q
        for _ in range(3):
            m = rng.normal(size=(2, 2))
            m[1, 1] = (1 + m[0, 1] * m[1, 0]) / m[0, 0]  # det 1
            moved = PlaneCurve(grid=c.grid, gamma=c.gamma @ m.T, closed=True)
            assert np.max(np.abs(ge.curvature(moved).q - q0)) < 1e-9


class TestHolonomy:
    def test_circle_curvature_closes(self):
        g = Grid(n=256, period=2 * np.pi)
        hol = ge.holonomy(CurvatureField(grid=g, q=-np.ones(256)))
        assert hol.is_closed
        assert np.max(np.abs(hol.matrix - np.eye(2))) < 1e-8

    def test_zero_curvature_shear(self):
        g = Grid(n=256, period=2 * np.pi)
        hol = ge.holonomy(CurvatureField(grid=g, q=np.zeros(256)))
        assert not hol.is_closed
        want = np.array([[1.0, 0.0], [2 * np.pi, 1.0]])
        assert np.max(np.abs(hol.matrix - want)) < 1e-8

    def test_double_speed_rotation_closes(self):
        g = Grid(n=256, period=2 * np.pi)
        hol = ge.holonomy(CurvatureField(grid=g, q=-4 * np.ones(256)))
        assert hol.is_closed
        assert np.max(np.abs(hol.matrix - np.eye(2))) < 1e-8

    def test_determinant_one(self):
        g = Grid(n=256, period=2 * np.pi)
        hol = ge.holonomy(CurvatureField(grid=g, q=0.3 * np.sin(g.nodes)))
        assert abs(np.linalg.det(hol.matrix) - 1.0) < 1e-10


class TestLift:
    def test_constant_scalar_lifts_to_tangent_vector(self):
        c = circle_curve()
        tf = ge.lift(np.ones(c.grid.n), c)
        gx = np.column_stack([-np.sin(c.grid.nodes), np.cos(c.grid.nodes)])
        assert np.max(np.abs(tf.lifted - gx)) < 1e-12

    def test_flow_field_from_half_curvature(self):
        c = circle_curve()
        qf = ge.curvature(c)
        tf = ge.lift(-0.5 * qf.q, c)
        # q = -1: the field is gamma_x / 2
        gx = np.column_stack([-np.sin(c.grid.nodes), np.cos(c.grid.nodes)])
        assert np.max(np.abs(tf.lifted - 0.5 * gx)) < 1e-10

    def test_tangency_identity(self):
        c = circle_curve()
        rng = np.random.default_rng(4)
        xi = sum(rng.normal() * np.cos(m * c.grid.nodes + rng.uniform(0, 6))
                 for m in range(1, 5))
        tf = ge.lift(xi, c)
        assert ge.tangency_defect(tf, c) < 1e-8


class TestFdDerivative:
    def test_polynomial_exactness(self):
        x = np.linspace(0, 1, 50)
        f = x ** 5 - 2 * x ** 3 + x
        d = ge.fd_derivative(f, x[1] - x[0], 1)
        want = 5 * x ** 4 - 6 * x ** 2 + 1
        assert np.max(np.abs(d - want)) < 1e-10

    def test_second_derivative(self):
        x = np.linspace(-1, 1, 200)
        d2 = ge.fd_derivative(np.exp(x), x[1] - x[0], 2)
        assert np.max(np.abs(d2 - np.exp(x))) < 1e-9


class TestResolvedFlag:
    def test_smooth_field_is_resolved(self):
        g = Grid(n=128, period=2 * np.pi)
        assert CurvatureField(grid=g, q=np.sin(g.nodes)).resolved

    def test_noise_is_not_resolved(self):
        g = Grid(n=128, period=2 * np.pi)
        rng = np.random.default_rng(0)
        assert not CurvatureField(grid=g, q=rng.normal(size=128)).resolved
