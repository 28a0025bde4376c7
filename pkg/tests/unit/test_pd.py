"""
Unit tests for crysdr.services.pd: divided-power algebras and envelopes.
"""

import random
from math import comb, factorial

import pytest

from crysdr.core.config import settings
from crysdr.core.exceptions import CapTooSmall, NonzeroConstantTerm, NotEisenstein, NotRegularSequence
from crysdr.services.pd import (
    PDAlgebra,
    PDElement,
    binomial_power_minus_one,
    conjugate_filtration_pd,
    faltings_breuil,
    gamma,
    gamma_plus_p_multiple,
    hodge_graded_structure,
    hodge_level,
    is_eisenstein,
    iterated_gamma_iso,
    koszul_h1_dimension,
    log_one_plus,
    pd_mul,
    pd_envelope,
)
from crysdr.services.poly import Poly, PolyRing


class TestPDAlgebra:
    """Multiplication and divided powers in B<x>."""

    def setup_method(self):
        self.A = PDAlgebra(PolyRing([], 3, 2), ["x"], 6)
        self.x = self.A.var("x")

    def test_powers_are_factorial_multiples(self):
        assert self.x * self.x == self.A.gamma_var("x", 2) * 2
        # x^3 = 3! γ_3(x) = 6 γ_3(x) mod 9
        assert self.x ** 3 == self.A.gamma_var("x", 3) * 6

    def test_gamma_of_variable(self):
        assert gamma(2, self.x) == self.A.gamma_var("x", 2)
        assert gamma(0, self.x) == self.A.one()

    def test_gamma_composition(self):
        # γ_2(γ_2(x)) = 4!/(2!^2 2!) γ_4(x) = 3 γ_4(x)
        assert gamma(2, self.A.gamma_var("x", 2)) == self.A.gamma_var("x", 4) * 3

    def test_pd_mul(self):
        assert pd_mul(self.x, self.A.gamma_var("x", 2)) == self.A.gamma_var("x", 3) * 3
        mod3 = PDAlgebra(PolyRing([], 3, 1), ["x"], 6)
        assert pd_mul(mod3.var("x"), mod3.gamma_var("x", 2)).is_zero()

    def test_gamma_of_negative_gamma_mod_2(self):
        A = PDAlgebra(PolyRing([], 2, 1), ["x"], 6)
        assert gamma(2, -A.gamma_var("x", 2)) == A.gamma_var("x", 4)

    def test_gamma_needs_pd_ideal(self):
        with pytest.raises(NonzeroConstantTerm):
            gamma(2, self.A.one() + self.x)

    def test_weight_cap_sets_truncated(self):
        product = self.x * self.A.gamma_var("x", 6)
        assert product.is_zero()
        assert product.truncated

    def test_log_of_power(self):
        z = binomial_power_minus_one(self.x, 3)
        assert log_one_plus(z) == log_one_plus(self.x) * 3

    def test_negative_exponent_inverts(self):
        u = binomial_power_minus_one(self.x, -1)
        assert (u + self.x + u * self.x).is_zero()


class TestEnvelopes:
    """Truncated envelopes of regular sequences."""

    def setup_method(self):
        self.ring = PolyRing(["x"], 2, 1)
        self.x = self.ring.gen("x")

    def test_conjugate_graded_pieces_have_rank_one(self):
        D = pd_envelope(self.ring, [self.x], 4)
        for level in range(3):
            row = conjugate_filtration_pd(D, level)
            assert row["gr_rank"] == row["expected_rank"] == 1

    def test_conjugate_level_beyond_cap(self):
        D = pd_envelope(self.ring, [self.x], 4)
        with pytest.raises(CapTooSmall):
            conjugate_filtration_pd(D, 3)

    def test_koszul_detects_non_regular(self):
        ring = PolyRing(["x", "y"], 2, 1)
        x, y = ring.gens()
        assert koszul_h1_dimension(ring, [x, y], 3) == 0
        assert koszul_h1_dimension(self.ring, [self.x, self.x], 2) == 1

    def test_non_regular_sequence_rejected(self):
        with pytest.raises(NotRegularSequence):
            pd_envelope(self.ring, [self.x, self.x], 4)

    @pytest.mark.parametrize("r,p,cap", [(1, 2, 3), (1, 3, 8), (2, 2, 7)])
    def test_iterated_gamma_iso(self, r, p, cap):
        assert iterated_gamma_iso(r, p, cap)["bijective"]

    def test_iterated_gamma_cap(self):
        with pytest.raises(CapTooSmall):
            iterated_gamma_iso(1, 2, 2)


class TestFaltingsBreuil:
    """W[u]<E(u)> for Eisenstein E and its Hodge filtration."""

    def setup_method(self):
        self.ring = PolyRing(["u"], 2, 2)

    def test_is_eisenstein(self):
        assert is_eisenstein(Poly(self.ring, {(0,): -2, (2,): 1}))
        assert not is_eisenstein(Poly(self.ring, {(0,): 4, (2,): 1}))

    def test_not_eisenstein_rejected(self):
        with pytest.raises(NotEisenstein):
            faltings_breuil(2, 2, Poly(self.ring, {(0,): 1, (2,): 1}), 4)

    def test_gr1_free_rank_one(self):
        E = Poly(self.ring, {(0,): -2, (2,): 1})
        D = faltings_breuil(2, 2, E, 4)
        gr = hodge_graded_structure(D, 1)
        assert gr["free"]
        assert gr["rank_over_O"] == 1
        assert gr["generated_by_gamma_r_E"]


def _random_ideal_element(A, rng):
    return PDElement(A, {(i,): rng.randrange(A.base.modulus) for i in range(1, 3)})


class TestDividedPowerAxioms:
    """Seeded random checks of the divided-power identities in B<x>."""

    @pytest.mark.parametrize("p,cap", [(2, 6), (3, 6), (5, 5)])
    def test_gamma_axioms(self, p, cap):
        A = PDAlgebra(PolyRing([], p, 2), ["x"], cap)
        rng = random.Random(settings.DEFAULT_SEED)
        for _ in range(settings.PROPERTY_CASES):
            u, v = _random_ideal_element(A, rng), _random_ideal_element(A, rng)
            k = rng.randrange(1, 4)
            j = rng.randrange(1, 3)
            a = rng.randrange(A.base.modulus)
            assert gamma(k, u + v) == sum((gamma(i, u) * gamma(k - i, v) for i in range(k + 1)), A.zero())
            assert gamma(k, u * a) == gamma(k, u) * (a ** k)
            assert gamma(j, u) * gamma(k, u) == gamma(j + k, u) * comb(j + k, j)
            scalar = factorial(j * k) // (factorial(j) * factorial(k) ** j)
            assert gamma(j, gamma(k, u)) == gamma(j * k, u) * scalar


class TestEnvelopeLifts:
    """Moving between an envelope and its lifting pd-algebra."""

    def setup_method(self):
        ring = PolyRing(["u"], 3, 2)
        self.u = ring.gen("u")
        self.E = self.u ** 2 - 3
        self.D = faltings_breuil(3, 2, self.E, 6)

    def test_split_ideal_recovers_the_quotient(self):
        ideal_part, rem = self.D.split_ideal(self.E * (self.u + 1) + 2)
        assert rem == 2
        assert ideal_part.coefficient((1,)) == self.u + 1

    def test_lift_is_a_section_of_the_normal_form(self):
        y = self.D.pd_algebra.var(self.D.pd_algebra.variables[0])
        for x in (gamma(2, y), gamma(3, y) * 2 + y, self.D.pd_algebra.constant(self.u)):
            nf = self.D.normal_form(x)
            assert self.D.normal_form(self.D.lift(nf)) == nf

    def test_gamma_plus_p_multiple_mod_9(self):
        A = PDAlgebra(PolyRing([], 3, 2), ["x"], 6)
        x = A.var("x")
        # γ_2(x + 3) = γ_2(x) + 3x + 9/2 and 9/2 vanishes mod 9
        assert gamma_plus_p_multiple(2, x, A.base.one()) == gamma(2, x) + x * 3

    def test_hodge_level_of_divided_powers(self):
        y = self.D.pd_algebra.var(self.D.pd_algebra.variables[0])
        assert hodge_level(self.D, self.D.normal_form(gamma(2, y))) == 2
        assert hodge_level(self.D, self.D.normal_form(y)) == 1
        assert hodge_level(self.D, self.D.normal_form(self.D.pd_algebra.one())) == 0
