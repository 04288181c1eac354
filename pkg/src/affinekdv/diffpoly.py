"""Exact differential polynomials in one periodic unknown q(x).

A monomial is a multiset of derivative orders (order i stands for the i-th
x-derivative of q; the empty multiset is the constant monomial).  Coefficients
are exact rationals, so the hierarchy recursion and every symbolic identity
test hold without floating error.  Values are immutable and hashable.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import groupby
from typing import Iterable, Mapping

import numpy as np

from . import numerics
from .errors import NotExactDerivative, ResolutionError

Monomial = tuple  # sorted tuple of derivative orders

_SCALARS = (int, Fraction)


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    raise TypeError(f"coefficients must be exact rationals, got {type(c).__name__}")


def _canon_key(mon: Monomial):
    """Canonical print/order key: total degree, then the sorted order tuple."""
    return (len(mon), mon)


def _peel_key(mon: Monomial):
    """Leading-term key for formal integration: descending orders, longer wins."""
    return tuple(sorted(mon, reverse=True))


class DiffPoly:
    """Immutable differential polynomial with exact rational coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping | None = None):
        data = {}
        if terms:
            for mon, c in terms.items():
                c = _as_fraction(c)
                if c == 0:
                    continue
                key = tuple(sorted(mon))
                if any((not isinstance(o, int)) or o < 0 for o in key):
                    raise ValueError(f"invalid monomial {mon!r}")
                data[key] = data.get(key, Fraction(0)) + c
        self._terms = {m: c for m, c in data.items() if c != 0}
        self._hash = None

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero() -> "DiffPoly":
        return DiffPoly()

    @staticmethod
    def constant(c) -> "DiffPoly":
        return DiffPoly({(): _as_fraction(c)})

    @staticmethod
    def q(order: int = 0) -> "DiffPoly":
        """The single variable: the order-th x-derivative of q."""
        return DiffPoly({(order,): Fraction(1)})

    @staticmethod
    def monomial(orders: Iterable[int], coeff=1) -> "DiffPoly":
        return DiffPoly({tuple(sorted(orders)): _as_fraction(coeff)})

    # -- basic protocol ------------------------------------------------------

    def items(self):
        return self._terms.items()

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if isinstance(other, _SCALARS):
            other = DiffPoly.constant(other)
        if not isinstance(other, DiffPoly):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    @property
    def max_order(self) -> int:
        """Highest derivative order present (0 for constants and zero)."""
        orders = [o for mon in self._terms for o in mon]
        return max(orders) if orders else 0

    @property
    def degree(self) -> int:
        return max((len(m) for m in self._terms), default=0)

    def constant_term(self) -> Fraction:
        return self._terms.get((), Fraction(0))

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, _SCALARS):
            other = DiffPoly.constant(other)
        if not isinstance(other, DiffPoly):
            return NotImplemented
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, Fraction(0)) + c
        return DiffPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return DiffPoly({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        if isinstance(other, _SCALARS):
            other = DiffPoly.constant(other)
        if not isinstance(other, DiffPoly):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, _SCALARS):
            c = _as_fraction(other)
            return DiffPoly({m: c * v for m, v in self._terms.items()})
        if not isinstance(other, DiffPoly):
            return NotImplemented
        out = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                key = tuple(sorted(m1 + m2))
                out[key] = out.get(key, Fraction(0)) + c1 * c2
        return DiffPoly(out)

    __rmul__ = __mul__

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int) or exponent < 0:
            raise ValueError("exponent must be a nonnegative integer")
        out = DiffPoly.constant(1)
        for _ in range(exponent):
            out = out * self
        return out

    # -- calculus ------------------------------------------------------------

    def derivative(self, n: int = 1) -> "DiffPoly":
        """Total x-derivative (Leibniz rule), applied n times."""
        p = self
        for _ in range(n):
            out = {}
            for mon, c in p._terms.items():
                for i in range(len(mon)):
                    bumped = tuple(sorted(mon[:i] + (mon[i] + 1,) + mon[i + 1:]))
                    out[bumped] = out.get(bumped, Fraction(0)) + c
            p = DiffPoly(out)
        return p

    def partial(self, order: int) -> "DiffPoly":
        """Partial derivative with respect to the order-th derivative of q."""
        out = {}
        for mon, c in self._terms.items():
            mult = mon.count(order)
            if mult:
                idx = mon.index(order)
                reduced = mon[:idx] + mon[idx + 1:]
                out[reduced] = out.get(reduced, Fraction(0)) + c * mult
        return DiffPoly(out)

    def variational_derivative(self) -> "DiffPoly":
        """Euler operator: sum_i (-d/dx)^i of the partial w.r.t. the i-th derivative."""
        acc = DiffPoly.zero()
        for i in range(self.max_order + 1):
            term = self.partial(i).derivative(i)
            acc = acc + (term if i % 2 == 0 else -term)
        return acc

    def integrate_exact(self) -> "DiffPoly":
        """Formal antiderivative r with r' = self, when one exists.

        The input must be a total x-derivative of a differential polynomial
        with no constant term; the Euler-operator kernel criterion detects
        this, after which the highest-derivative term is stripped greedily.
        """
        if () in self._terms:
            raise NotExactDerivative("nonzero constant term")
        if not self.variational_derivative().is_zero:
            raise NotExactDerivative("variational derivative is nonzero")
        rem = self
        out = DiffPoly.zero()
        guard = 0
        while rem:
            guard += 1
            if guard > 100000:
                raise NotExactDerivative("integration did not terminate")
            mon = max(rem._terms, key=_peel_key)
            c = rem._terms[mon]
            k = mon[-1] if mon else 0
            if k == 0:
                raise NotExactDerivative("leading term has no derivative factor")
            lowered = tuple(sorted(mon[:-1] + (k - 1,)))
            mult = lowered.count(k - 1)
            piece = DiffPoly.monomial(lowered, c / mult)
            out = out + piece
            rem = rem - piece.derivative()
        return out

    # -- numeric bridge --------------------------------------------------------

    def evaluate(self, field, check_resolution: bool = True) -> np.ndarray:
        """Pointwise values on a sampled curvature field.

        field must expose .grid (a numerics.Grid) and .q (samples).  Spectral
        derivatives supply the factors; factors of monomials with degree >= 2
        pass through the 2/3-rule projection first.
        """
        grid = field.grid
        qs = np.asarray(field.q, dtype=float)
        orders = sorted({o for mon in self._terms for o in mon})
        derivs = {}
        for o in orders:
            derivs[o] = qs if o == 0 else numerics.spectral_derivative(grid, qs, o)
        if check_resolution and orders:
            top = derivs[max(orders)]
            if numerics.spectral_tail_ratio(grid, top) > 1e-4:
                raise ResolutionError(
                    "spectral tail of the highest-order derivative exceeds 1e-4; "
                    "refine the grid")
        smooth = {o: numerics.dealias(grid, derivs[o]) for o in orders}
        out = np.zeros(grid.n)
        for mon, c in self._terms.items():
            if not mon:
                out += float(c)
                continue
            src = derivs if len(mon) == 1 else smooth
            prod = np.ones(grid.n)
            for o in mon:
                prod = prod * src[o]
            out += float(c) * prod
        return out

    # -- rendering ---------------------------------------------------------

    @staticmethod
    def _mon_str(mon: Monomial) -> str:
        parts = []
        for o, grp in groupby(mon):
            m = len(list(grp))
            base = "q" if o == 0 else f"q{o}"
            parts.append(base if m == 1 else f"{base}^{m}")
        return "*".join(parts)

    def __str__(self):
        if not self._terms:
            return "0"
        pieces = []
        for mon in sorted(self._terms, key=_canon_key):
            c = self._terms[mon]
            mag = abs(c)
            if mon:
                body = self._mon_str(mon) if mag == 1 else f"{mag}*{self._mon_str(mon)}"
            else:
                body = str(mag)
            pieces.append(("-" if c < 0 else "+", body))
        sign, body = pieces[0]
        text = ("-" if sign == "-" else "") + body
        for sign, body in pieces[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self):
        return f"DiffPoly({self})"

    def json_terms(self) -> list:
        """Canonical JSON form: [{'monomial': [...orders], 'coeff': 'p/q'}, ...]."""
        return [
            {"monomial": list(mon), "coeff": str(self._terms[mon])}
            for mon in sorted(self._terms, key=_canon_key)
        ]


# module-level operation aliases matching the functional surface


def derivative(p: DiffPoly, n: int = 1) -> DiffPoly:
    return p.derivative(n)


def variational_derivative(p: DiffPoly) -> DiffPoly:
    return p.variational_derivative()


def integrate_exact(p: DiffPoly) -> DiffPoly:
    return p.integrate_exact()


def evaluate(p: DiffPoly, field, check_resolution: bool = True) -> np.ndarray:
    return p.evaluate(field, check_resolution=check_resolution)
