"""
Unit tests for crysdr.services.witt.
"""

import pytest
import sympy

from crysdr.core.config import settings
from crysdr.core.exceptions import LengthMismatch, NotCharP
from crysdr.services.base_arith import make_finite_algebra
from crysdr.services.poly import PolyRing
from crysdr.services.witt import (
    WittRing,
    clear_cache,
    universal_polynomials,
    witt_add,
    witt_from_integer,
    witt_mul,
    witt_property_suite,
)


class TestUniversalPolynomials:
    """Sum and product polynomials from the ghost map."""

    def test_first_sum_polynomial(self):
        X0, X1, Y0, Y1 = sympy.symbols("X0 X1 Y0 Y1")
        tables = universal_polynomials(2, 2)
        assert tables.as_expr("sum", 0) == X0 + Y0
        assert sympy.expand(tables.as_expr("sum", 1) - (X1 + Y1 - X0 * Y0)) == 0
        assert tables.as_expr("product", 0) == X0 * Y0

    def test_tables_are_cached(self):
        clear_cache()
        assert universal_polynomials(3, 2) is universal_polynomials(3, 2)

    def test_reduced_tables(self):
        reduced = universal_polynomials(2, 2, base_n=1)
        assert reduced.modulus == 2
        assert all(c % 2 for terms in reduced.sums for c, _ in terms)


class TestWittOfFp:
    """W_n(F_p) is Z/p^n."""

    def setup_method(self):
        self.W = WittRing(PolyRing([], 3, 1), 2)

    def test_integers_add_and_multiply(self):
        for a in range(9):
            for b in (1, 4, 7):
                wa, wb = witt_from_integer(self.W, a), witt_from_integer(self.W, b)
                assert witt_add(wa, wb) == witt_from_integer(self.W, a + b)
                assert witt_mul(wa, wb) == witt_from_integer(self.W, a * b)

    def test_p_is_verschiebung_of_one(self):
        assert self.W.from_int(3) == self.W.one().verschiebung()

    def test_integer_ghost_components_over_lift(self):
        W = WittRing(PolyRing([], 2, 4), 2)
        v = witt_from_integer(W, 5)
        assert v.ghost() == [W.base.from_int(5)] * 2


class TestWittOperators:
    """F, V and Teichmüller lifts over F_p[t]/(t^4)."""

    def setup_method(self):
        self.base = make_finite_algebra(2, 1, [{"var": "t", "coeffs": [0, 0, 0, 0, 1]}])
        self.W = WittRing(self.base, 3)
        self.t = self.base.gen("t")

    def test_fv_is_p(self):
        a = self.W.element([self.t, self.base.one(), self.t * self.t])
        assert a.verschiebung().frobenius() == a * 2

    def test_teichmuller_multiplicative(self):
        one_plus_t = self.base.one() + self.t
        lhs = self.W.teichmuller(self.t) * self.W.teichmuller(one_plus_t)
        assert lhs == self.W.teichmuller(self.t * one_plus_t)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            self.W.element([self.t])
        with pytest.raises(LengthMismatch):
            self.W.one() + WittRing(self.base, 2).one()

    def test_frobenius_needs_char_p(self):
        W = WittRing(PolyRing([], 2, 2), 2)
        with pytest.raises(NotCharP):
            W.one().frobenius()


class TestPropertySuite:
    """Randomized identities with a fixed seed."""

    @pytest.mark.parametrize("p", [2, 3])
    def test_suite_passes(self, p):
        result = witt_property_suite(p, n=3, cases=settings.PROPERTY_CASES, seed=settings.DEFAULT_SEED)
        assert result["passed"], result["failures"]
        assert result["seed"] == settings.DEFAULT_SEED

    def test_suite_is_reproducible(self):
        assert witt_property_suite(2, n=2, cases=10, seed=3) == witt_property_suite(2, n=2, cases=10, seed=3)
