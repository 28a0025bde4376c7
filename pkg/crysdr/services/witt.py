"""
Truncated p-typical Witt vectors over an arbitrary commutative base.

Sum and product are evaluated through the universal polynomials S_j, P_j in
Z[X_0..X_{n-1}, Y_0..Y_{n-1}], derived once per (p, n) from the ghost
components

    w_j(X) = sum_{i <= j} p^i X_i^{p^(j-i)}

by exact division, then kept in an LRU cache. A base is any ring object with
zero()/one()/from_int() and attributes p and n (characteristic p^n, so an
F_p-algebra has n = 1); its elements need +, -, *, ** and is_zero().
"""

import random
from dataclasses import dataclass
from threading import RLock
from typing import Any, Dict, List, Optional, Sequence, Tuple

import sympy
from cachetools import LRUCache

from crysdr.core.config import settings
from crysdr.core.exceptions import LengthMismatch, NotCharP
from crysdr.core.logging import ServiceLogger, performance_logger
from crysdr.services.base_arith import check_prime, make_finite_algebra
from crysdr.services.poly import PolyRing
from crysdr.utils.time_utils import logged_operation

logger = ServiceLogger("witt")

Term = Tuple[int, Tuple[int, ...]]


@dataclass(frozen=True)
class WittTables:
    """Universal sum and product polynomials as (coefficient, exponents) lists."""

    p: int
    n: int
    sums: Tuple[Tuple[Term, ...], ...]
    products: Tuple[Tuple[Term, ...], ...]
    modulus: Optional[int] = None

    def reduced(self, modulus: int) -> "WittTables":
        def red(table):
            return tuple(
                tuple((c % modulus, e) for c, e in terms if c % modulus)
                for terms in table
            )

        return WittTables(self.p, self.n, red(self.sums), red(self.products), modulus)

    def as_expr(self, kind: str, j: int) -> sympy.Expr:
        """S_j or P_j as a sympy expression in X0.., Y0.."""
        gens = sympy.symbols(f"X0:{self.n}") + sympy.symbols(f"Y0:{self.n}")
        table = self.sums if kind == "sum" else self.products
        expr = sympy.Integer(0)
        for c, exps in table[j]:
            mono = sympy.Integer(c)
            for g, e in zip(gens, exps):
                if e:
                    mono *= g ** e
            expr += mono
        return sympy.expand(expr)


def _ghost_poly(gens: Sequence[sympy.Poly], p: int, j: int) -> sympy.Poly:
    total = gens[0] ** (p ** j)
    for i in range(1, j + 1):
        total = total + (gens[i] ** (p ** (j - i))).mul_ground(p ** i)
    return total


def _derive_tables(p: int, n: int) -> WittTables:
    xs_sym = sympy.symbols(f"X0:{n}")
    ys_sym = sympy.symbols(f"Y0:{n}")
    gens = xs_sym + ys_sym
    xs = [sympy.Poly(x, *gens, domain="ZZ") for x in xs_sym]
    ys = [sympy.Poly(y, *gens, domain="ZZ") for y in ys_sym]
    sums: List[sympy.Poly] = []
    prods: List[sympy.Poly] = []
    for j in range(n):
        gx, gy = _ghost_poly(xs, p, j), _ghost_poly(ys, p, j)
        s, m = gx + gy, gx * gy
        for i in range(j):
            s = s - (sums[i] ** (p ** (j - i))).mul_ground(p ** i)
            m = m - (prods[i] ** (p ** (j - i))).mul_ground(p ** i)
        sums.append(s.exquo_ground(p ** j))
        prods.append(m.exquo_ground(p ** j))

    def terms(poly: sympy.Poly) -> Tuple[Term, ...]:
        return tuple(sorted((int(c), tuple(int(e) for e in exps)) for exps, c in poly.terms()))

    return WittTables(p, n, tuple(terms(s) for s in sums), tuple(terms(m) for m in prods))


_tables_cache: LRUCache = LRUCache(maxsize=settings.WITT_CACHE_SIZE)
_tables_lock = RLock()


def universal_polynomials(p: int, n: int, base_n: Optional[int] = None) -> WittTables:
    """Cached universal tables, optionally reduced mod p^base_n for a base of that characteristic."""
    key = (p, n, base_n)
    with _tables_lock:
        cached = _tables_cache.get(key)
        if cached is not None:
            performance_logger.log_cache_hit(f"witt:{p}:{n}:{base_n}", cache_type="lru")
            return cached
        performance_logger.log_cache_miss(f"witt:{p}:{n}:{base_n}", cache_type="lru")
        if base_n is None:
            tables = _derive_tables(check_prime(p), n)
        else:
            tables = universal_polynomials(p, n).reduced(p ** base_n)
        _tables_cache[key] = tables
        return tables


def clear_cache() -> None:
    with _tables_lock:
        _tables_cache.clear()


class _Powers:
    """Lazy power table of the 2n inputs of one evaluation."""

    def __init__(self, values: Sequence[Any]):
        self.values = list(values)
        self.table: Dict[Tuple[int, int], Any] = {}

    def get(self, v: int, e: int):
        key = (v, e)
        if key not in self.table:
            if e > 1 and (v, e - 1) in self.table:
                self.table[key] = self.table[(v, e - 1)] * self.values[v]
            else:
                self.table[key] = self.values[v] ** e
        return self.table[key]


def _evaluate(terms: Sequence[Term], powers: _Powers, zero_slots: frozenset, base: Any):
    total = base.zero()
    for c, exps in terms:
        if any(e and v in zero_slots for v, e in enumerate(exps)):
            continue
        value = None
        for v, e in enumerate(exps):
            if e:
                f = powers.get(v, e)
                value = f if value is None else value * f
        if value is None:
            value = base.one()
        total = total + (value * c if c != 1 else value)
    return total


class WittRing:
    """W_n(base)."""

    def __init__(self, base: Any, n: int):
        if n < 1:
            raise ValueError("Witt length must be >= 1")
        self.base = base
        self.n = n
        self.p: int = base.p
        self.base_n: Optional[int] = getattr(base, "n", None)

    @property
    def is_char_p(self) -> bool:
        return self.base_n == 1

    @property
    def tables(self) -> WittTables:
        return universal_polynomials(self.p, self.n, self.base_n)

    def __eq__(self, other):
        return isinstance(other, WittRing) and self.n == other.n and self.base == other.base

    def __hash__(self):
        return hash(("W", self.n, self.base))

    def __repr__(self):
        return f"W_{self.n}({self.base!r})"

    def element(self, components: Sequence[Any]) -> "WittVector":
        if len(components) != self.n:
            raise LengthMismatch(
                f"expected {self.n} Witt components, got {len(components)}",
                context={"expected": self.n, "got": len(components)},
            )
        return WittVector(self, components)

    def zero(self) -> "WittVector":
        return WittVector(self, [self.base.zero()] * self.n)

    def one(self) -> "WittVector":
        return self.teichmuller(self.base.one())

    def from_int(self, m: int) -> "WittVector":
        return witt_from_integer(self, m)

    def teichmuller(self, x: Any) -> "WittVector":
        """[x] = (x, 0, ..., 0)."""
        return WittVector(self, [x] + [self.base.zero()] * (self.n - 1))

    def restrict(self, m: int) -> "WittRing":
        return WittRing(self.base, m)


class WittVector:
    """Element of W_n(base); components are base elements."""

    __slots__ = ("parent", "components")

    def __init__(self, parent: WittRing, components: Sequence[Any]):
        self.parent = parent
        self.components: Tuple[Any, ...] = tuple(
            parent.base.from_int(c) if isinstance(c, int) else c for c in components
        )

    def _coerce(self, other: Any) -> "WittVector":
        if isinstance(other, WittVector):
            if other.parent != self.parent:
                raise LengthMismatch(
                    "Witt vectors of different lengths or bases",
                    context={"left": repr(self.parent), "right": repr(other.parent)},
                )
            return other
        if isinstance(other, int):
            return self.parent.from_int(other)
        raise TypeError(f"cannot combine WittVector with {type(other).__name__}")

    def _combine(self, other: "WittVector", table) -> "WittVector":
        base = self.parent.base
        values = self.components + other.components
        zero_slots = frozenset(i for i, v in enumerate(values) if v.is_zero())
        powers = _Powers(values)
        return WittVector(self.parent, [_evaluate(t, powers, zero_slots, base) for t in table])

    def __add__(self, other):
        o = self._coerce(other)
        return self._combine(o, self.parent.tables.sums)

    __radd__ = __add__

    def __neg__(self):
        if self.parent.p != 2:
            return WittVector(self.parent, [-c for c in self.components])
        return self.parent.from_int(-1) * self

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, int):
            if other == 1:
                return self
            if other == 0:
                return self.parent.zero()
        o = self._coerce(other)
        return self._combine(o, self.parent.tables.products)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not supported")
        result = self.parent.one()
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def __eq__(self, other):
        if isinstance(other, int):
            other = self.parent.from_int(other)
        if not isinstance(other, WittVector):
            return NotImplemented
        return self.parent == other.parent and all(
            a == b for a, b in zip(self.components, other.components)
        )

    def __hash__(self):
        return hash((self.parent, tuple(repr(c) for c in self.components)))

    def __getitem__(self, i: int):
        return self.components[i]

    def ghost(self) -> List[Any]:
        """Ghost components w_0..w_{n-1} evaluated in the base."""
        p = self.parent.p
        out = []
        for j in range(self.parent.n):
            total = self.parent.base.zero()
            for i in range(j + 1):
                total = total + (self.components[i] ** (p ** (j - i))) * (p ** i)
            out.append(total)
        return out

    def frobenius(self) -> "WittVector":
        """F(a) = (a_0^p, a_1^p, ...) over an F_p-algebra."""
        if not self.parent.is_char_p:
            raise NotCharP("Frobenius is componentwise only over F_p-algebras",
                           context={"base": repr(self.parent.base)})
        p = self.parent.p
        return WittVector(self.parent, [c ** p for c in self.components])

    def verschiebung(self) -> "WittVector":
        """V(a) = (0, a_0, ..., a_{n-2})."""
        zero = self.parent.base.zero()
        return WittVector(self.parent, [zero] + list(self.components[:-1]))

    def restrict(self, m: int) -> "WittVector":
        return WittVector(self.parent.restrict(m), self.components[:m])

    def map_components(self, fn, parent: Optional[WittRing] = None) -> "WittVector":
        return WittVector(parent or self.parent, [fn(c) for c in self.components])

    def to_json(self) -> Dict[str, Any]:
        def enc(c):
            return c.to_json() if hasattr(c, "to_json") else repr(c)

        return {"length": self.parent.n, "components": [enc(c) for c in self.components]}

    def __repr__(self):
        return "(" + ", ".join(repr(c) for c in self.components) + ")"


def witt_add(a: WittVector, b: WittVector) -> WittVector:
    return a + b


def witt_mul(a: WittVector, b: WittVector) -> WittVector:
    return a * b


def _teichmuller_digits(m: int, p: int, n: int) -> List[int]:
    """Digits d_i in [0, p) with m = sum p^i [d_i] in W_n(F_p) = Z/p^n."""
    digits = []
    s = m % p ** n
    for i in range(n):
        mod = p ** (n - i)
        d = s % p
        digits.append(d)
        s = ((s - pow(d, p ** (n - 1), mod)) % mod) // p
    return digits


def _integer_witt_components(m: int, p: int, n: int) -> List[int]:
    """Components of m in W_n(Z), solved from the ghost components w_j = m."""
    comps: List[int] = []
    for j in range(n):
        rest = m - sum(p ** i * comps[i] ** (p ** (j - i)) for i in range(j))
        comps.append(rest // p ** j)
    return comps


def witt_from_integer(ring: WittRing, m: int) -> WittVector:
    """Image of the integer m in W_n(base)."""
    if ring.is_char_p:
        comps = _teichmuller_digits(m, ring.p, ring.n)
    else:
        comps = _integer_witt_components(m, ring.p, ring.n)
    return WittVector(ring, [ring.base.from_int(c) for c in comps])


# property suite

def _random_scalar_vector(ring: WittRing, rng: random.Random) -> WittVector:
    modulus = ring.p ** ring.base_n
    return ring.element([rng.randrange(modulus) for _ in range(ring.n)])


def _random_algebra_vector(ring: WittRing, rng: random.Random) -> WittVector:
    alg = ring.base
    return ring.element([
        alg.element([rng.randrange(alg.modulus) for _ in range(alg.rank)]) for _ in range(ring.n)
    ])


@logged_operation(logger, summarize=lambda r: {"passed": r["passed"], "cases": r["cases"]})
def witt_property_suite(
    p: int,
    n: int = 3,
    cases: Optional[int] = None,
    seed: Optional[int] = None,
    lift_precision: int = 6,
) -> Dict[str, Any]:
    """Randomized checks of the Witt layer.

    Ghost homomorphism for + and * over Z/p^lift_precision, then F∘V = p,
    V(a)V(b) = pV(ab) and Teichmüller multiplicativity over F_p[t]/(t^4).
    """
    check_prime(p)
    cases = settings.PROPERTY_CASES if cases is None else cases
    rng = random.Random(settings.DEFAULT_SEED if seed is None else seed)
    lifts = WittRing(PolyRing([], p, lift_precision), n)
    failures: Dict[str, int] = {"ghost_add": 0, "ghost_mul": 0, "fv": 0, "vv": 0, "teichmuller": 0}
    for _ in range(cases):
        a = _random_scalar_vector(lifts, rng)
        b = _random_scalar_vector(lifts, rng)
        ga, gb = a.ghost(), b.ghost()
        if (a + b).ghost() != [x + y for x, y in zip(ga, gb)]:
            failures["ghost_add"] += 1
        if (a * b).ghost() != [x * y for x, y in zip(ga, gb)]:
            failures["ghost_mul"] += 1

    truncated = make_finite_algebra(p, 1, [{"var": "t", "coeffs": [0, 0, 0, 0, 1]}])
    char_p = WittRing(truncated, n)
    algebra_cases = max(1, cases // 10)
    for _ in range(algebra_cases):
        a = _random_algebra_vector(char_p, rng)
        b = _random_algebra_vector(char_p, rng)
        if a.verschiebung().frobenius() != a * p:
            failures["fv"] += 1
        if a.verschiebung() * b.verschiebung() != (a * b).verschiebung() * p:
            failures["vv"] += 1
        x, y = a[0], b[0]
        if char_p.teichmuller(x) * char_p.teichmuller(y) != char_p.teichmuller(x * y):
            failures["teichmuller"] += 1
    return {
        "p": p,
        "length": n,
        "lift_precision": lift_precision,
        "cases": cases,
        "algebra_cases": algebra_cases,
        "seed": settings.DEFAULT_SEED if seed is None else seed,
        "failures": failures,
        "passed": not any(failures.values()),
    }
