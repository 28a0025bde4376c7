"""
Exact integer combinatorics for divided-power calculus.

All coefficients are computed over Z first and only then reduced, so a
failed divisibility is an arithmetic bug and aborts loudly.
"""

from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

from crysdr.core.exceptions import VerificationFailure


def exact_div(a: int, b: int) -> int:
    q, r = divmod(a, b)
    if r:
        raise VerificationFailure(
            "non-integral divided-power coefficient",
            context={"numerator": a, "denominator": b},
        )
    return q


@lru_cache(maxsize=4096)
def binomial(a: int, b: int) -> int:
    return comb(a, b)


@lru_cache(maxsize=4096)
def gamma_composition(k: int, j: int) -> int:
    """Integer c with γ_k(γ_j(x)) = c·γ_{kj}(x), i.e. (kj)!/(k!·(j!)^k)."""
    return exact_div(factorial(k * j), factorial(k) * factorial(j) ** k)


@lru_cache(maxsize=4096)
def pd_unit(k: int, p: int) -> int:
    """(kp)!/(k!·p^k); a p-adic unit."""
    return exact_div(factorial(k * p), factorial(k) * p ** k)


def p_adic_valuation(x: int, p: int) -> int:
    """v_p of a nonzero integer."""
    if x == 0:
        raise ValueError("valuation of 0 is infinite")
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def rational_mod(q: Fraction, p: int, n: int) -> int:
    """Image of a p-integral rational in Z/p^n."""
    if q.denominator % p == 0:
        raise VerificationFailure(
            "rational is not p-integral",
            context={"value": str(q), "p": p},
        )
    modulus = p ** n
    return (q.numerator * pow(q.denominator, -1, modulus)) % modulus
