"""
Unit tests for crysdr.services.poly.
"""

import random
from fractions import Fraction

import pytest

from crysdr.core.config import settings
from crysdr.core.exceptions import FractionalExponentOnNonMonoidVariable, MixedRings, NotCharP
from crysdr.services.poly import (
    Poly,
    PolyRing,
    frobenius_twist,
    poly_mul,
    relative_frobenius,
    substitute,
)


class TestPolyRing:
    """Construction and exponent checks."""

    def setup_method(self):
        self.ring = PolyRing(["x", "y"], 3, 2)

    def test_arithmetic_mod_p_power(self):
        x, y = self.ring.gens()
        f = (x + y) ** 3
        # 3 x^2 y and 3 x y^2 survive mod 9
        assert f.coefficient((2, 1)) == 3
        assert f.coefficient((3, 0)) == 1
        assert (f * 3).coefficient((2, 1)) == 0

    def test_degree_cap_truncates(self):
        capped = PolyRing(["x"], 2, 1, degree_cap=3)
        x = capped.gen("x")
        assert (x ** 2) * (x ** 2) == capped.zero()
        assert (1 + x) ** 2 == 1 + x ** 2

    def test_fractional_exponent_needs_monoid(self):
        ring = PolyRing(["x", "y"], 2, 1, root_depth=1, monoid_vars=["x"])
        half = ring.monomial({"x": Fraction(1, 2)})
        assert half * half == ring.gen("x")
        with pytest.raises(FractionalExponentOnNonMonoidVariable):
            ring.monomial({"y": Fraction(1, 2)})

    def test_mixed_rings(self):
        other = PolyRing(["x", "y"], 3, 1)
        with pytest.raises(MixedRings):
            self.ring.gen("x") + other.gen("x")

    def test_poly_mul(self):
        ring = PolyRing(["x"], 3, 2)
        x = ring.gen("x")
        assert poly_mul(x + 1, x - 1) == x ** 2 + 8

    def test_total_degree(self):
        x, y = self.ring.gens()
        assert (x ** 2 * y + y).total_degree() == 3
        assert self.ring.zero().total_degree() == -1


class TestSubstitution:
    """Ring maps between polynomial rings."""

    def test_substitute(self):
        ring = PolyRing(["x", "t"], 2, 2)
        target = PolyRing(["x"], 2, 2)
        x = target.gen("x")
        g = ring.gen("t") ** 2 + ring.gen("x")
        assert substitute(g, {"t": x, "x": x}, target=target) == x ** 2 + x


class TestFrobenius:
    """Frobenius twist and relative Frobenius over F_p."""

    def setup_method(self):
        self.ring = PolyRing(["y"], 3, 1)

    def test_twist_then_relative_frobenius(self):
        y = self.ring.gen("y")
        twisted = frobenius_twist(y + 1)
        assert twisted.ring.twist_of == self.ring
        assert relative_frobenius(twisted) == y ** 3 + 1

    def test_coefficient_style(self):
        f = Poly(self.ring, {(1,): 2})
        assert frobenius_twist(f, style="coefficient") == f

    def test_twist_needs_char_p(self):
        ring = PolyRing(["y"], 3, 2)
        with pytest.raises(NotCharP):
            frobenius_twist(ring.gen("y"))

    def test_relative_frobenius_needs_twist(self):
        with pytest.raises(NotCharP):
            relative_frobenius(self.ring.gen("y"))


def _random_poly(ring, rng, terms=4):
    out = {}
    for _ in range(terms):
        exps = tuple(rng.randrange(3 * ring.denom) if v in ring.monoid_vars else rng.randrange(3) * ring.denom
                     for v in ring.variables)
        out[exps] = rng.randrange(ring.modulus)
    return Poly(ring, out)


class TestRingAxioms:
    """Seeded random checks of the ring laws, monoid roots included."""

    @pytest.mark.parametrize("p,n,k", [(2, 1, 0), (3, 2, 1), (5, 1, 2)])
    def test_ring_laws(self, p, n, k):
        ring = PolyRing(["x", "y"], p, n, root_depth=k, monoid_vars=["x"])
        rng = random.Random(settings.DEFAULT_SEED)
        for _ in range(settings.PROPERTY_CASES):
            f, g, h = (_random_poly(ring, rng) for _ in range(3))
            assert poly_mul(f, g) == poly_mul(g, f)
            assert (f * g) * h == f * (g * h)
            assert f * (g + h) == f * g + f * h
