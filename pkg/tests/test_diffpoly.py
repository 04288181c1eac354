"""Exact algebra of differential polynomials."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affinekdv.diffpoly import DiffPoly
from affinekdv.errors import NotExactDerivative, ResolutionError
from affinekdv.geometry import CurvatureField
from affinekdv.numerics import Grid, spectral_derivative

q = DiffPoly.q


def F(a, b=1):
    return Fraction(a, b)


class TestArithmetic:
    def test_equality_is_canonical(self):
        assert q(1) * q(0) == q(0) * q(1)
        assert q() + q() == 2 * q()
        assert q() - q() == DiffPoly.zero()
        assert DiffPoly.monomial([2, 0], F(1, 2)) == F(1, 2) * q() * q(2)

    def test_no_zero_coefficients_stored(self):
        p = q() + (-1) * q()
        assert p.is_zero
        assert not list(p.items())

    def test_float_coefficients_rejected(self):
        with pytest.raises(TypeError):
            DiffPoly.constant(0.5)
        with pytest.raises(TypeError):
            0.5 * q()

    def test_power(self):
        assert q() ** 3 == q() * q() * q()
        assert q(1) ** 0 == DiffPoly.constant(1)

    def test_hashable(self):
        assert hash(q() * q(1)) == hash(q(1) * q())
        assert len({q(), q(1), q() + q(1)}) == 3


class TestDerivative:
    def test_product_rule_on_square(self):
        assert (q() * q()).derivative() == 2 * q() * q(1)

    def test_product_rule_mixed(self):
        assert (q(1) * q(2)).derivative() == q(2) * q(2) + q(1) * q(3)

    def test_recursion_entry_derivative(self):
        # derivative of (1/8)(3q^2 - q_xx), scaled by -1/2, reproduces the
        # next diagonal entry (1/16)(q_xxx - 6 q q_x)
        c2 = F(1, 8) * (3 * q() ** 2 - q(2))
        assert F(-1, 2) * c2.derivative() == F(1, 16) * (q(3) - 6 * q() * q(1))

    def test_constant_derivative_vanishes(self):
        assert DiffPoly.constant(F(3, 7)).derivative().is_zero


class TestVariationalDerivative:
    def test_quadratic_density(self):
        assert (F(1, 2) * q() ** 2).variational_derivative() == q()

    def test_fifth_hamiltonian_density(self):
        dens = F(-1, 8) * (q(1) ** 2 + 2 * q() ** 3)
        assert dens.variational_derivative() == F(1, 4) * q(2) - F(3, 4) * q() ** 2

    def test_exact_derivative_annihilated(self):
        assert q(2).variational_derivative().is_zero


class TestIntegrateExact:
    def test_square_antiderivative(self):
        assert (2 * q() * q(1)).integrate_exact() == q() ** 2

    def test_kdv_combination(self):
        p = q(3) - 6 * q() * q(1)
        r = p.integrate_exact()
        assert r == q(2) - 3 * q() ** 2
        assert r.derivative() == p

    def test_non_exact_rejected(self):
        with pytest.raises(NotExactDerivative):
            (q() ** 2).integrate_exact()

    def test_constant_term_rejected(self):
        with pytest.raises(NotExactDerivative):
            (q(1) + 1).integrate_exact()


monomials = st.lists(st.integers(min_value=0, max_value=3), min_size=0, max_size=3)
coeffs = st.fractions(min_value=-4, max_value=4).filter(lambda c: c != 0)


@st.composite
def diff_polys(draw, max_terms=4):
    n = draw(st.integers(min_value=0, max_value=max_terms))
    p = DiffPoly.zero()
    for _ in range(n):
        p = p + DiffPoly.monomial(draw(monomials), draw(coeffs))
    return p


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(diff_polys(), diff_polys())
    def test_derivative_is_a_derivation(self, p, r):
        assert (p * r).derivative() == p.derivative() * r + p * r.derivative()

    @settings(max_examples=60, deadline=None)
    @given(diff_polys())
    def test_variational_derivative_kills_derivatives(self, p):
        assert p.derivative().variational_derivative().is_zero

    @settings(max_examples=60, deadline=None)
    @given(diff_polys())
    def test_integrate_inverts_derivative(self, p):
        p = p - DiffPoly.constant(p.constant_term())
        assert p.derivative().integrate_exact() == p


class TestEvaluate:
    def setup_method(self):
        self.grid = Grid(n=64, period=2 * np.pi)
        self.x = self.grid.nodes

    def test_linear_combination_on_sine(self):
        field = CurvatureField(grid=self.grid, q=np.sin(self.x))
        vals = (q(2) + q()).evaluate(field)
        assert np.max(np.abs(vals)) < 1e-12

    def test_product_identity_on_sine(self):
        field = CurvatureField(grid=self.grid, q=np.sin(self.x))
        vals = (q() * q(1)).evaluate(field)
        assert np.max(np.abs(vals - 0.5 * np.sin(2 * self.x))) < 1e-12

    def test_flow_value_matches_soliton_time_derivative(self):
        from affinekdv.hierarchy import flow_rhs
        grid = Grid(n=1024, period=60.0)
        x = grid.nodes

        def soliton(t):
            arg = (x - 30.0 + t + 30.0) % 60.0 - 30.0
            return -2.0 / np.cosh(arg) ** 2

        field = CurvatureField(grid=grid, q=soliton(0.0))
        vals = flow_rhs(1).evaluate(field)
        eps = 1e-5
        dq_dt = (soliton(eps) - soliton(-eps)) / (2 * eps)
        assert np.max(np.abs(vals - dq_dt)) < 1e-6

    def test_commutes_with_derivative(self):
        grid = Grid(n=256, period=2 * np.pi)
        x = grid.nodes
        field = CurvatureField(grid=grid, q=np.exp(np.sin(x)) - 1.2)
        p = F(1, 3) * q() * q(1) + q(2) - 2 * q() ** 2
        a = p.derivative().evaluate(field)
        b = spectral_derivative(grid, p.evaluate(field), 1)
        assert np.max(np.abs(a - b)) < 1e-10

    def test_coarse_grid_raises_resolution_error(self):
        grid = Grid(n=32, period=2 * np.pi)
        rng = np.random.default_rng(0)
        field = CurvatureField(grid=grid, q=rng.normal(size=32))
        with pytest.raises(ResolutionError):
            (q(4)).evaluate(field)


class TestRendering:
    def test_text_form(self):
        p = F(1, 16) * q(3) - F(3, 8) * q() * q(1)
        assert str(p) == "1/16*q3 - 3/8*q*q1"

    def test_powers_and_constants(self):
        assert str(q() ** 2 - 1) == "-1 + q^2"
        assert str(DiffPoly.zero()) == "0"
        assert str(-q(1)) == "-q1"

    def test_json_terms(self):
        p = F(1, 4) * q(3) - F(3, 2) * q() * q(1)
        assert p.json_terms() == [
            {"monomial": [3], "coeff": "1/4"},
            {"monomial": [0, 1], "coeff": "-3/2"},
        ]
