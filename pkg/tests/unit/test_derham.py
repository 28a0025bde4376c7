"""
Unit tests for crysdr.services.derham: (log) de Rham complexes and Cartier.
"""

import random
from fractions import Fraction

import pytest

from crysdr.core.config import settings
from crysdr.core.exceptions import NotField, NotOnTwist
from crysdr.services import derham
from crysdr.services.derham import (
    DeRhamForm,
    FreePrelogAlgebra,
    cartier_inverse,
    cohomology,
    de_rham_complex,
    de_rham_differential,
    relatively_perfect_check,
    verify_cartier,
    wedge,
)
from crysdr.services.poly import Poly


def _random_form(T, rng, degree, terms=3):
    """Sum of monomial multiples of random wedges of the given degree."""
    out = {}
    for _ in range(terms):
        w = tuple(sorted(rng.sample(range(len(T.generators)), degree)))
        exps = tuple(rng.randrange(4) * (1 if T.is_monoid(i) else T.ring.denom)
                     for i in range(len(T.generators)))
        c = Poly(T.ring, {exps: rng.randrange(1, T.ring.modulus)})
        out[w] = out[w] + c if w in out else c
    return DeRhamForm(T, degree, out)


class TestDeRhamComplex:
    """Truncated Ω• of free algebras."""

    def test_polynomial_line_mod_2(self):
        T = FreePrelogAlgebra(2, 1, poly_gens=["y"], degree_cap=8)
        H = cohomology(de_rham_complex(T, 8))
        # y^even and y^odd dy
        assert H.dims[0] == 5
        assert H.dims[1] == 4

    def test_log_line_mod_3(self):
        T = FreePrelogAlgebra(3, 1, monoid_gens=["x"], degree_cap=6)
        H = cohomology(de_rham_complex(T, 6))
        assert H.dims[0] == 3
        assert H.dims[1] == 3

    def test_d_squared_is_zero(self):
        T = FreePrelogAlgebra(3, 1, monoid_gens=["x"], poly_gens=["y", "z"], degree_cap=6)
        x, y, z = (T.ring.gen(v) for v in ("x", "y", "z"))
        f = T.function(x * y ** 2 * z + y)
        assert de_rham_differential(de_rham_differential(f)).is_zero()
        assert de_rham_complex(T, 4).check_d_squared()

    def test_cohomology_needs_field(self):
        T = FreePrelogAlgebra(2, 2, poly_gens=["y"], degree_cap=4)
        with pytest.raises(NotField):
            cohomology(de_rham_complex(T, 4))


class TestCartier:
    """C^{-1} onto H^i mod p."""

    @pytest.mark.parametrize("p,monoid,poly,cap", [
        (2, [], ["y"], 8),
        (3, [], ["y"], 9),
        (2, ["x"], ["y"], 6),
        (3, ["x"], [], 6),
    ])
    def test_cartier_bijective(self, p, monoid, poly, cap):
        T = FreePrelogAlgebra(p, 1, monoid_gens=monoid, poly_gens=poly, degree_cap=cap)
        report = verify_cartier(T, p, cap)
        assert report["stable"]
        assert report["passed"]
        assert all(d["twist_dim"] == d["h_dim"] for d in report["degrees"])

    def test_inverse_lands_on_y_to_p_minus_one_dy(self):
        T = FreePrelogAlgebra(3, 1, poly_gens=["y"], degree_cap=6)
        T1 = T.twist()
        dy = T1.form({("y",): T1.ring.one()})
        image = cartier_inverse(dy, T)
        assert image == T.form({("y",): T.ring.gen("y") ** 2})

    def test_inverse_needs_twist(self):
        T = FreePrelogAlgebra(2, 1, poly_gens=["y"], degree_cap=4)
        with pytest.raises(NotOnTwist):
            cartier_inverse(T.form({("y",): T.ring.one()}))

    def test_verify_needs_mod_p(self):
        T = FreePrelogAlgebra(2, 2, poly_gens=["y"], degree_cap=4)
        with pytest.raises(NotField):
            verify_cartier(T)


class TestRelativelyPerfect:
    """Adjoining p-th roots of a monoid generator."""

    @pytest.mark.parametrize("p,k", [(2, 0), (2, 1), (3, 0)])
    def test_transition_kills_h1(self, p, k):
        result = relatively_perfect_check(p, k, 4)
        assert result["kills_h1"]
        assert result["monomials_become_cocycles"]
        assert result["passed"]


class TestRandomForms:
    """Identities checked on seeded random forms."""

    @pytest.mark.parametrize("p,n,monoid,poly,depth", [
        (2, 1, ["x"], ["y", "z"], 0),
        (3, 2, ["x"], ["y", "z"], 1),
        (5, 1, [], ["y", "z", "t"], 0),
    ])
    def test_d_squared_vanishes(self, p, n, monoid, poly, depth):
        T = FreePrelogAlgebra(p, n, monoid_gens=monoid, poly_gens=poly, root_depth=depth)
        rng = random.Random(settings.DEFAULT_SEED)
        for _ in range(settings.PROPERTY_CASES):
            omega = _random_form(T, rng, rng.randrange(len(T.generators)))
            assert de_rham_differential(de_rham_differential(omega)).is_zero(), omega

    @pytest.mark.parametrize("p,monoid,poly", [(2, ["x"], ["y"]), (3, [], ["y", "z"])])
    def test_cartier_inverse_is_multiplicative(self, p, monoid, poly):
        T = FreePrelogAlgebra(p, 1, monoid_gens=monoid, poly_gens=poly)
        T1 = T.twist()
        rng = random.Random(settings.DEFAULT_SEED)
        for _ in range(settings.PROPERTY_CASES):
            alpha = _random_form(T1, rng, rng.randrange(2))
            beta = _random_form(T1, rng, rng.randrange(2))
            left = cartier_inverse(wedge(alpha, beta), T)
            right = wedge(cartier_inverse(alpha, T), cartier_inverse(beta, T))
            assert left == right, (alpha, beta)


class TestTruncationStability:
    """A moving truncation is reported, not raised."""

    def test_unstable_truncation_is_flagged(self, monkeypatch):
        tables = iter([{(0, Fraction(0)): 1}, {(0, Fraction(0)): 2}])
        monkeypatch.setattr(derham, "weight_table", lambda T, C: next(tables))
        T = FreePrelogAlgebra(2, 1, poly_gens=["y"], degree_cap=4)
        report = verify_cartier(T, 2, 4)
        assert report["stable"] is False
        assert not report["passed"]
