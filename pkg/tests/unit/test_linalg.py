"""
Unit tests for crysdr.utils.linalg and crysdr.utils.combinatorics.
"""

import pytest

from crysdr.core.exceptions import VerificationFailure
from crysdr.utils.combinatorics import exact_div, gamma_composition, pd_unit
from crysdr.utils.linalg import (
    howell_form,
    howell_reduce,
    kernel_mod_p,
    matmul_mod,
    quotient_invariants,
    rank_mod_p,
    solve_mod_p,
)


class TestFieldLinearAlgebra:
    """Rank, kernels and solving over F_p."""

    def test_rank(self):
        assert rank_mod_p([[1, 2], [2, 4]], 2, 3) == 1
        assert rank_mod_p([[1, 2], [3, 4]], 2, 5) == 2
        assert rank_mod_p([[2, 4]], 2, 2) == 0
        assert rank_mod_p([], 3, 2) == 0

    def test_kernel(self):
        assert kernel_mod_p([[1, 1]], 2, 2) == [[1, 1]]
        assert kernel_mod_p([], 2, 3) == [[1, 0], [0, 1]]

    def test_solve(self):
        solution = solve_mod_p([[1, 1], [0, 1]], 2, [2, 1], 3)
        assert solution == [1, 1]
        assert solve_mod_p([[1, 1], [1, 1]], 2, [0, 1], 3) is None

    def test_matmul_mod(self):
        assert matmul_mod([[1, 2]], [[3], [4]], 5) == [[1]]


class TestHowellForm:
    """Canonical submodules of (Z/p^n)^k."""

    def test_equal_spans_give_equal_forms(self):
        a = howell_form([[1, 2], [0, 2]], 2, 2, 2)
        b = howell_form([[1, 0], [1, 2]], 2, 2, 2)
        assert a == b == [(0, [1, 0]), (1, [0, 2])]

    def test_quotient_invariants(self):
        basis = howell_form([[2, 0]], 2, 2, 2)
        assert quotient_invariants(basis, 2, 2, 2) == [1, 2]

    def test_reduce(self):
        basis = howell_form([[1, 0], [0, 2]], 2, 2, 2)
        assert howell_reduce([1, 3], basis, 2, 2) == [0, 1]


class TestCombinatorics:
    """Integer identities behind divided powers."""

    def test_gamma_composition(self):
        assert gamma_composition(2, 2) == 3
        assert gamma_composition(1, 5) == 1

    def test_pd_unit_is_prime_to_p(self):
        for p in (2, 3, 5):
            for k in range(1, 5):
                assert pd_unit(k, p) % p

    def test_exact_div(self):
        assert exact_div(12, 4) == 3
        with pytest.raises(VerificationFailure, match="non-integral"):
            exact_div(5, 2)
