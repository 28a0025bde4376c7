"""
Unit tests for crysdr.services.base_arith.

Covers Z/p^n scalars, triangular finite algebras and normalized valuations.
"""

import random
from fractions import Fraction

import pytest
import sympy

from crysdr.core.config import settings
from crysdr.core.exceptions import NonTriangularPresentation, NotPrime, UnknownGenerator
from crysdr.services.base_arith import (
    PadicScalar,
    Valuation,
    check_prime,
    cyclotomic_relation,
    evaluate_integer_poly,
    make_finite_algebra,
    reduce,
    valuation,
    vp,
)


class TestScalars:
    """Z/p^n arithmetic and valuations of integers."""

    def test_check_prime(self):
        assert check_prime(5) == 5
        with pytest.raises(NotPrime, match="not a prime"):
            check_prime(6)

    def test_vp(self):
        assert vp(24, 2) == 3
        assert vp(7, 3) == 0

    def test_scalar_arithmetic(self):
        a = PadicScalar(7, 3, 2)
        b = PadicScalar(5, 3, 2)
        assert a + b == 3
        assert a * b == 35 % 9
        assert (a * a.inverse()) == 1

    def test_scalar_valuation(self):
        assert PadicScalar(18, 3, 3).valuation() == 2
        zero = PadicScalar(0, 3, 2).valuation()
        assert zero.capped
        assert str(zero) == ">=2"

    def test_non_unit_has_no_inverse(self):
        with pytest.raises(ZeroDivisionError):
            PadicScalar(6, 3, 2).inverse()


class TestValuationFormatting:
    """Valuations print as exact fractions."""

    def test_fraction_string(self):
        assert str(Valuation(Fraction(1, 2))) == "1/2"
        assert str(Valuation(Fraction(3))) == "3"
        assert Valuation(Fraction(2, 4)) == Fraction(1, 2)


class TestFiniteAlgebra:
    """Triangular presentations and their valuations."""

    def setup_method(self):
        # Z/4[w]/(w^2 - 2)
        self.ramified = make_finite_algebra(2, 2, [{"var": "w", "coeffs": [-2, 0, 1]}])

    def test_relation_holds(self):
        w = self.ramified.gen("w")
        assert w ** 2 == self.ramified.from_int(2)
        assert self.ramified.rank == 2

    def test_uniformizer_valuation(self):
        assert valuation(self.ramified.gen("w")) == Fraction(1, 2)
        assert valuation(self.ramified.from_int(2)) == 1

    def test_zero_is_capped(self):
        v = valuation(self.ramified.zero())
        assert v.capped
        assert v.value == 2

    def test_cyclotomic_uniformizer(self):
        alg = make_finite_algebra(3, 3, [cyclotomic_relation("z", 3, 1)])
        assert valuation(alg.gen("z") - 1) == Fraction(1, 2)

    def test_evaluate_integer_poly_on_root(self):
        alg = make_finite_algebra(5, 1, [cyclotomic_relation("z", 5, 1)])
        assert evaluate_integer_poly([1, 1, 1, 1, 1], alg.gen("z")).is_zero()

    def test_relations_out_of_order(self):
        with pytest.raises(NonTriangularPresentation):
            make_finite_algebra(2, 1, [{"var": "a", "coeffs": [0, 1]}], generators=["b"])

    def test_unknown_generator(self):
        with pytest.raises(UnknownGenerator):
            make_finite_algebra(2, 1, [{"var": "a", "terms": [{"exps": {"q": 1}, "coeff": 1}]}])

    def test_reduce_to_normal_form(self):
        root2 = make_finite_algebra(2, 3, [{"var": "b", "coeffs": [-2, 0, 1]}])
        assert reduce(root2, [({"b": 2}, 1)]) == root2.from_int(2)
        zeta = make_finite_algebra(3, 2, [cyclotomic_relation("a", 3, 1)])
        a = zeta.gen("a")
        assert reduce(zeta, [({"a": 2}, 1)]) == a * 8 + zeta.from_int(8)

    def test_tower_rank(self):
        alg = make_finite_algebra(3, 2, [cyclotomic_relation("a", 3, 1), {"var": "b", "coeffs": [-3, 0, 0, 1]}])
        assert alg.rank == 6

    def test_zero_divisor_tie_is_capped(self):
        # a - b divides zero, so its norm vanishes and only the tie value is known
        alg = make_finite_algebra(2, 2, [{"var": "a", "coeffs": [-2, 0, 1]},
                                         {"var": "b", "coeffs": [-2, 0, 1]}])
        v = valuation(alg.gen("a") - alg.gen("b"))
        assert v.capped
        assert v.value == Fraction(1, 2)


ONE_GENERATOR = [
    (3, 2, [-3, -3, 0, 1]),
    (3, 3, [1, 1, 1]),
    (2, 3, [-2, 0, 1]),
]


class TestRandomArithmetic:
    """Seeded random checks against polynomial long division and the norm."""

    @pytest.mark.parametrize("p,n,coeffs", ONE_GENERATOR)
    def test_multiplication_matches_long_division(self, p, n, coeffs):
        alg = make_finite_algebra(p, n, [{"var": "t", "coeffs": coeffs}])
        t = sympy.Symbol("t")
        modulus = sympy.Poly(list(reversed(coeffs)), t, domain="ZZ")
        rng = random.Random(settings.DEFAULT_SEED)
        for _ in range(settings.PROPERTY_CASES):
            a = [rng.randrange(alg.modulus) for _ in range(alg.rank)]
            b = [rng.randrange(alg.modulus) for _ in range(alg.rank)]
            product = sympy.Poly(list(reversed(a)), t, domain="ZZ") * sympy.Poly(list(reversed(b)), t, domain="ZZ")
            rem = product.rem(modulus).all_coeffs()[::-1]
            expected = [int(c) for c in rem] + [0] * (alg.rank - len(rem))
            assert alg.element(a) * alg.element(b) == alg.element(expected)

    @pytest.mark.parametrize("p,n,coeffs", ONE_GENERATOR)
    def test_valuation_is_multiplicative(self, p, n, coeffs):
        alg = make_finite_algebra(p, n, [{"var": "t", "coeffs": coeffs}])
        rng = random.Random(settings.DEFAULT_SEED)
        for _ in range(settings.PROPERTY_CASES):
            x = alg.element([rng.randrange(alg.modulus) for _ in range(alg.rank)])
            y = alg.element([rng.randrange(alg.modulus) for _ in range(alg.rank)])
            vx, vy, vxy = valuation(x), valuation(y), valuation(x * y)
            if vx.capped or vy.capped:
                continue
            total = vx.value + vy.value
            if vxy.capped:
                assert vxy.value <= total
            else:
                assert vxy.value == total
