"""
Unit tests for crysdr.services.derived_dr: bar resolutions, the truncated
totalization and the comparison map to the divided-power envelope.
"""

from math import factorial

import pytest

from crysdr.core.exceptions import OutOfStableRange, WindowTooWide
from crysdr.services.derived_dr import (
    BarBicomplex,
    BarResolution,
    bar_resolution,
    comp_to_crystalline,
    conjugate_e1,
    derived_dr_h0,
    generator_cocycle,
    liftable_cartier_split,
    totalize,
    twist_dimension,
)
from crysdr.services.pd import pd_envelope
from crysdr.services.poly import PolyRing
from crysdr.services.runner import memory_guard


def _line(p):
    ring = PolyRing(["x"], p, 1)
    return ring, ring.gen("x")


class TestBarResolution:
    """The simplicial polynomial resolution of A/(f)."""

    def test_simplicial_identities(self):
        A, x = _line(2)
        assert bar_resolution(A, x, 3).check_simplicial_identities()

    def test_faces_of_first_level(self):
        A, x = _line(3)
        R = BarResolution(A, x, 1)
        assert R.face(1, 0)["t1"] == R.lift(x, 0)
        assert R.face(1, 1)["t1"].is_zero()

    def test_resolves_quotient(self):
        A, x = _line(2)
        check = BarResolution(A, x, 2).homology_check(3)
        assert check["h0"] == check["expected_h0"] == 1
        assert check["passed"]

    def test_negative_level_rejected(self):
        A, x = _line(2)
        with pytest.raises(ValueError):
            BarResolution(A, x, -1)


class TestDerivedH0:
    """Conjugate graded pieces of H^0 against the E_1 page."""

    @pytest.mark.parametrize("p,s_max,deg_cap", [(2, 3, 6), (3, 2, 6)])
    def test_gr_matches_e1_where_certified(self, p, s_max, deg_cap):
        A, x = _line(p)
        h0 = derived_dr_h0(A, x, s_max, deg_cap)
        assert len(h0["gr"]) == s_max
        for i, (dim, certified) in enumerate(zip(h0["gr"], h0["certified"])):
            try:
                expected = conjugate_e1(A, x, i, -i, s_max, deg_cap)
            except OutOfStableRange:
                continue
            if certified:
                assert dim == expected

    def test_three_levels_at_three(self):
        A, x = _line(3)
        h0 = derived_dr_h0(A, x, 3, 8)
        assert h0["certified"] == [True, True, True]
        assert h0["gr"] == [3, 3, 3]
        assert h0["gr"] == [conjugate_e1(A, x, i, -i, 3, 8) for i in range(3)]

    def test_twist_dimension(self):
        A, x = _line(3)
        # F_3[x]/(x^3) in weight <= 5
        assert twist_dimension(A, x, 5) == 3

    def test_off_diagonal_e1_vanishes(self):
        A, x = _line(2)
        assert conjugate_e1(A, x, 0, 1, 2, 6) == 0

    def test_out_of_stable_range(self):
        A, x = _line(2)
        with pytest.raises(OutOfStableRange):
            conjugate_e1(A, x, 2, -2, 2, 6)
        with pytest.raises(OutOfStableRange):
            conjugate_e1(A, x, 1, -1, 2, 2)

    def test_memory_guard(self):
        A, x = _line(2)
        with memory_guard(1):
            with pytest.raises(WindowTooWide):
                totalize(BarBicomplex(BarResolution(A, x, 2), 6))


class TestSplitting:
    """The degree-one class from the Frobenius lift t -> t^p."""

    @pytest.mark.parametrize("p,representative", [(2, "t1*dt1"), (3, "t1^2*dt1")])
    def test_split_class_is_a_cocycle(self, p, representative):
        split = liftable_cartier_split(p)
        assert split["representative"] == representative
        assert split["cocycle"]
        assert split["representative_over_normalized"] == factorial(p - 1) % p


class TestComparison:
    """Comp of the unit and generator classes."""

    @pytest.mark.parametrize("p", [2, 3])
    def test_unit_and_generator(self, p):
        A, x = _line(p)
        envelope = pd_envelope(A, [x], 2 * p, assume_regular=True)
        P = envelope.pd_algebra
        y = envelope.pd_names[0]
        R0 = BarResolution(A, x, 0)
        assert comp_to_crystalline(generator_cocycle(R0, 0), envelope, R0) == P.one()
        R1 = BarResolution(A, x, 1)
        image = comp_to_crystalline(generator_cocycle(R1, 1), envelope, R1)
        assert image == -P.gamma_var(y, p)

    def test_generator_at_two_is_gamma_two(self):
        A, x = _line(2)
        envelope = pd_envelope(A, [x], 4, assume_regular=True)
        R = BarResolution(A, x, 1)
        image = comp_to_crystalline(generator_cocycle(R, 1), envelope, R)
        # -1 = 1 mod 2
        assert image == envelope.pd_algebra.gamma_var(envelope.pd_names[0], 2)
