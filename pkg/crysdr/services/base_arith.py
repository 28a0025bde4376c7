"""
Exact arithmetic in Z/p^n and in finite free Z/p^n-algebras.

An algebra is presented by one monic relation per generator, triangular in
generator order (the relation of generator i only mentions generators up
to i). Elements are coordinate vectors on the monomial basis
{x^e : 0 <= e_i < deg_i}, ordered degree-lexicographically.

Valuations are normalized by val(p) = 1. Each generator gets a valuation
from the shape of its relation (Eisenstein: the generator itself,
cyclotomic: the generator minus one), which yields a shifted basis with
known valuations. When the minimum over that basis is attained once the
answer is exact; ties fall back to the norm.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import comb, lcm
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import sympy

from crysdr.core.exceptions import (
    MixedRings,
    NonMonicRelation,
    NonTriangularPresentation,
    NotPrime,
    UnknownGenerator,
    ValuationUndefined,
)
from crysdr.core.logging import ServiceLogger
from crysdr.utils.time_utils import logged_operation

logger = ServiceLogger("base_arith")

Exponent = Tuple[int, ...]
Terms = Dict[Exponent, int]


def check_prime(p: int) -> int:
    if not isinstance(p, int) or not sympy.isprime(p):
        raise NotPrime(f"{p!r} is not a prime", context={"p": p})
    return p


def vp(x: int, p: int) -> int:
    """p-adic valuation of a nonzero integer."""
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


@dataclass(frozen=True)
class Valuation:
    """A normalized valuation, or the marker 'at least the precision cap'."""

    value: Fraction
    capped: bool = False

    def __str__(self) -> str:
        if self.capped:
            return f">={self.value}"
        if self.value.denominator == 1:
            return str(self.value.numerator)
        return f"{self.value.numerator}/{self.value.denominator}"

    def to_json(self) -> str:
        return str(self)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Valuation):
            return self.value == other.value and self.capped == other.capped
        if isinstance(other, (int, Fraction)):
            return not self.capped and self.value == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.value, self.capped))


class PadicScalar:
    """Element of Z/p^n."""

    __slots__ = ("value", "p", "n")

    def __init__(self, value: int, p: int, n: int):
        self.p = p
        self.n = n
        self.value = value % p ** n

    @property
    def modulus(self) -> int:
        return self.p ** self.n

    def _coerce(self, other: Any) -> "PadicScalar":
        if isinstance(other, PadicScalar):
            if (other.p, other.n) != (self.p, self.n):
                raise MixedRings(
                    "scalars over different Z/p^n",
                    context={"left": (self.p, self.n), "right": (other.p, other.n)},
                )
            return other
        if isinstance(other, int):
            return PadicScalar(other, self.p, self.n)
        raise TypeError(f"cannot combine PadicScalar with {type(other).__name__}")

    def __add__(self, other):
        return PadicScalar(self.value + self._coerce(other).value, self.p, self.n)

    __radd__ = __add__

    def __sub__(self, other):
        return PadicScalar(self.value - self._coerce(other).value, self.p, self.n)

    def __rsub__(self, other):
        return PadicScalar(self._coerce(other).value - self.value, self.p, self.n)

    def __mul__(self, other):
        return PadicScalar(self.value * self._coerce(other).value, self.p, self.n)

    __rmul__ = __mul__

    def __neg__(self):
        return PadicScalar(-self.value, self.p, self.n)

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        return PadicScalar(pow(self.value, k, self.modulus), self.p, self.n)

    def inverse(self) -> "PadicScalar":
        if self.value % self.p == 0:
            raise ZeroDivisionError(f"{self.value} is not a unit mod {self.p}^{self.n}")
        return PadicScalar(pow(self.value, -1, self.modulus), self.p, self.n)

    def is_zero(self) -> bool:
        return self.value == 0

    def valuation(self) -> Valuation:
        if self.value == 0:
            return Valuation(Fraction(self.n), capped=True)
        return Valuation(Fraction(vp(self.value, self.p)))

    def __eq__(self, other):
        if isinstance(other, int):
            return self.value == other % self.modulus
        if isinstance(other, PadicScalar):
            return (self.value, self.p, self.n) == (other.value, other.p, other.n)
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.p, self.n))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"PadicScalar({self.value} mod {self.p}^{self.n})"


def _cyclotomic_coeffs(m: int) -> List[int]:
    x = sympy.Symbol("x")
    return [int(c) for c in reversed(sympy.Poly(sympy.cyclotomic_poly(m, x), x).all_coeffs())]


class FiniteAlgebra:
    """Finite free Z/p^n-algebra with a triangular monic presentation."""

    def __init__(
        self,
        p: int,
        n: int,
        generators: Sequence[str],
        relations: Sequence[Terms],
        e: Optional[int] = None,
    ):
        check_prime(p)
        if n < 1:
            raise ValueError("precision exponent must be >= 1")
        self.p = p
        self.n = n
        self.modulus = p ** n
        self.generators: Tuple[str, ...] = tuple(generators)
        # raw integer relations, kept unreduced for shape detection
        self.relations: Tuple[Terms, ...] = tuple(dict(r) for r in relations)
        self._given_e = e
        self.degrees: Tuple[int, ...] = tuple(
            self._validate_relation(i, rel) for i, rel in enumerate(self.relations)
        )
        # x_i^{deg_i} = sum of these terms
        self._rewrite: List[Terms] = []
        for i, rel in enumerate(self.relations):
            rhs = {}
            for exps, c in rel.items():
                if exps[i] < self.degrees[i]:
                    rhs[exps] = (-c) % self.modulus
            self._rewrite.append({k: v for k, v in rhs.items() if v})
        self.basis: List[Exponent] = sorted(
            product(*[range(d) for d in self.degrees]),
            key=lambda ex: (sum(ex), ex),
        )
        self.index: Dict[Exponent, int] = {ex: i for i, ex in enumerate(self.basis)}
        self.rank = len(self.basis)
        self._table: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
        self._precisions: Dict[int, "FiniteAlgebra"] = {n: self}
        self._shapes: Optional[List[Tuple[int, Fraction]]] = None

    # presentation checks

    def _validate_relation(self, i: int, rel: Terms) -> int:
        name = self.generators[i]
        if not rel:
            raise NonMonicRelation(f"empty relation for {name}", context={"generator": name})
        for exps in rel:
            if len(exps) != len(self.generators):
                raise ValueError("relation exponent length does not match generators")
            if any(exps[j] for j in range(i + 1, len(exps))):
                raise NonTriangularPresentation(
                    f"relation for {name} mentions a later generator",
                    context={"generator": name, "term": list(exps)},
                )
        degree = max(exps[i] for exps in rel)
        leading = [(exps, c) for exps, c in rel.items() if exps[i] == degree]
        pure = tuple(degree if j == i else 0 for j in range(len(self.generators)))
        if degree < 1 or len(leading) != 1 or leading[0][0] != pure or leading[0][1] != 1:
            raise NonMonicRelation(
                f"relation for {name} is not monic in {name}",
                context={"generator": name, "degree": degree},
            )
        return degree

    # construction helpers

    def at_precision(self, n: int) -> "FiniteAlgebra":
        """The same presentation over Z/p^n."""
        if n not in self._precisions:
            self._precisions[n] = FiniteAlgebra(
                self.p, n, self.generators, self.relations, self._given_e
            )
        return self._precisions[n]

    def element(self, coords: Sequence[int]) -> "AlgebraElement":
        return AlgebraElement(self, coords)

    def zero(self) -> "AlgebraElement":
        return AlgebraElement(self, [0] * self.rank)

    def one(self) -> "AlgebraElement":
        return self.from_int(1)

    def from_int(self, c: int) -> "AlgebraElement":
        coords = [0] * self.rank
        coords[0] = c
        return AlgebraElement(self, coords)

    def gen(self, name: str) -> "AlgebraElement":
        return self.reduce_terms({self.monomial({name: 1}): 1})

    def monomial(self, exps: Mapping[str, int]) -> Exponent:
        out = [0] * len(self.generators)
        for name, e in exps.items():
            if name not in self.generators:
                raise UnknownGenerator(f"unknown generator {name!r}", context={"generators": list(self.generators)})
            out[self.generators.index(name)] += e
        return tuple(out)

    # reduction

    def reduce_terms(self, terms: Mapping[Exponent, int]) -> "AlgebraElement":
        """Normal form of a polynomial in the generators."""
        work: Terms = {}
        for exps, c in terms.items():
            if len(exps) != len(self.generators):
                raise UnknownGenerator("exponent vector does not match generators")
            work[exps] = (work.get(exps, 0) + c) % self.modulus
        coords = [0] * self.rank
        while work:
            exps, c = work.popitem()
            if c == 0:
                continue
            hit = None
            for i in range(len(self.generators) - 1, -1, -1):
                if exps[i] >= self.degrees[i]:
                    hit = i
                    break
            if hit is None:
                k = self.index[exps]
                coords[k] = (coords[k] + c) % self.modulus
                continue
            rest = list(exps)
            rest[hit] -= self.degrees[hit]
            for r_exps, r_c in self._rewrite[hit].items():
                new = tuple(a + b for a, b in zip(rest, r_exps))
                work[new] = (work.get(new, 0) + c * r_c) % self.modulus
        return AlgebraElement(self, coords)

    def _product_row(self, i: int, j: int) -> List[Tuple[int, int]]:
        key = (i, j) if i <= j else (j, i)
        row = self._table.get(key)
        if row is None:
            exps = tuple(a + b for a, b in zip(self.basis[i], self.basis[j]))
            reduced = self.reduce_terms({exps: 1})
            row = [(k, c) for k, c in enumerate(reduced.coords) if c]
            self._table[key] = row
        return row

    def multiplication_matrix(self, x: "AlgebraElement") -> List[List[int]]:
        """Matrix of y -> x*y on the basis (columns are images of basis vectors)."""
        cols = [(x * self.element([1 if k == j else 0 for k in range(self.rank)])).coords for j in range(self.rank)]
        return [[cols[j][i] for j in range(self.rank)] for i in range(self.rank)]

    # valuations

    def generator_shapes(self) -> List[Tuple[int, Fraction]]:
        """Per generator: (shift, valuation of generator - shift)."""
        if self._shapes is not None:
            return self._shapes
        shapes = []
        for i, rel in enumerate(self.relations):
            deg = self.degrees[i]
            if any(exps[j] for exps in rel for j in range(i)):
                raise ValuationUndefined(
                    f"relation for {self.generators[i]} has non-integer coefficients",
                    context={"generator": self.generators[i]},
                )
            coeffs = [0] * (deg + 1)
            for exps, c in rel.items():
                coeffs[exps[i]] = c
            if deg == 1:
                shapes.append((0, Fraction(0)))
                continue
            shape = None
            j = 1
            while self.p ** (j - 1) * (self.p - 1) <= deg:
                if self.p ** (j - 1) * (self.p - 1) == deg and coeffs == _cyclotomic_coeffs(self.p ** j):
                    shape = (1, Fraction(1, deg))
                    break
                j += 1
            if shape is None and all(c % self.p == 0 for c in coeffs[:-1]) and coeffs[0] % self.p ** 2 != 0:
                shape = (0, Fraction(1, deg))
            if shape is None:
                raise ValuationUndefined(
                    f"relation for {self.generators[i]} is neither Eisenstein nor cyclotomic",
                    context={"generator": self.generators[i], "coeffs": coeffs},
                )
            shapes.append(shape)
        self._shapes = shapes
        return shapes

    def basis_valuations(self) -> List[Fraction]:
        weights = [w for _, w in self.generator_shapes()]
        return [sum((e * w for e, w in zip(ex, weights)), Fraction(0)) for ex in self.basis]

    @property
    def ramification_index(self) -> int:
        if self._given_e is not None:
            return self._given_e
        try:
            return lcm(*[v.denominator for v in self.basis_valuations()])
        except ValuationUndefined:
            return 1

    def shifted_coordinates(self, x: "AlgebraElement") -> Dict[Exponent, int]:
        """Coordinates of x on the basis built from shifted generators."""
        shifts = [s for s, _ in self.generator_shapes()]
        out: Terms = {}
        for idx, c in enumerate(x.coords):
            if not c:
                continue
            factors = []
            for e, s in zip(self.basis[idx], shifts):
                if s:
                    factors.append([(l, comb(e, l)) for l in range(e + 1)])
                else:
                    factors.append([(e, 1)])
            for choice in product(*factors):
                exps = tuple(l for l, _ in choice)
                coeff = c
                for _, b in choice:
                    coeff *= b
                out[exps] = (out.get(exps, 0) + coeff) % self.modulus
        return {k: v for k, v in out.items() if v}

    def __eq__(self, other):
        if not isinstance(other, FiniteAlgebra):
            return NotImplemented
        return (self.p, self.n, self.generators, self.relations) == (
            other.p, other.n, other.generators, other.relations
        )

    def __hash__(self):
        return hash((self.p, self.n, self.generators, tuple(tuple(sorted(r.items())) for r in self.relations)))

    def __repr__(self):
        return f"FiniteAlgebra(p={self.p}, n={self.n}, generators={list(self.generators)}, rank={self.rank})"

    # JSON presentation

    def to_json(self) -> Dict[str, Any]:
        rels = []
        for i, rel in enumerate(self.relations):
            rels.append({
                "var": self.generators[i],
                "terms": [
                    {"exps": {g: e for g, e in zip(self.generators, exps) if e}, "coeff": c}
                    for exps, c in sorted(rel.items())
                ],
            })
        return {"p": self.p, "n": self.n, "generators": list(self.generators),
                "relations": rels, "e": self.ramification_index}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "FiniteAlgebra":
        return make_finite_algebra(data["p"], data["n"], data["relations"],
                                   generators=data.get("generators"), e=data.get("e"))


class AlgebraElement:
    """Reduced element of a FiniteAlgebra."""

    __slots__ = ("parent", "coords")

    def __init__(self, parent: FiniteAlgebra, coords: Sequence[int]):
        if len(coords) != parent.rank:
            raise ValueError(f"expected {parent.rank} coordinates, got {len(coords)}")
        self.parent = parent
        self.coords: Tuple[int, ...] = tuple(c % parent.modulus for c in coords)

    @property
    def coordinates(self) -> List[PadicScalar]:
        return [PadicScalar(c, self.parent.p, self.parent.n) for c in self.coords]

    def _coerce(self, other: Any) -> "AlgebraElement":
        if isinstance(other, AlgebraElement):
            if other.parent is not self.parent and other.parent != self.parent:
                raise MixedRings("elements of different algebras")
            return other
        if isinstance(other, PadicScalar):
            return self.parent.from_int(other.value)
        if isinstance(other, int):
            return self.parent.from_int(other)
        raise TypeError(f"cannot combine AlgebraElement with {type(other).__name__}")

    def __add__(self, other):
        o = self._coerce(other)
        return AlgebraElement(self.parent, [a + b for a, b in zip(self.coords, o.coords)])

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return AlgebraElement(self.parent, [a - b for a, b in zip(self.coords, o.coords)])

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return AlgebraElement(self.parent, [-a for a in self.coords])

    def __mul__(self, other):
        if isinstance(other, int):
            return AlgebraElement(self.parent, [a * other for a in self.coords])
        o = self._coerce(other)
        parent = self.parent
        out = [0] * parent.rank
        left = [(i, c) for i, c in enumerate(self.coords) if c]
        right = [(j, c) for j, c in enumerate(o.coords) if c]
        for i, ci in left:
            for j, cj in right:
                cc = ci * cj
                for k, v in parent._product_row(i, j):
                    out[k] += cc * v
        return AlgebraElement(parent, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not supported")
        result = self.parent.one()
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def is_zero(self) -> bool:
        return not any(self.coords)

    def is_one(self) -> bool:
        return self == self.parent.one()

    def change_precision(self, target: FiniteAlgebra) -> "AlgebraElement":
        """Image in the same presentation at another precision (coordinates lifted as integers)."""
        return AlgebraElement(target, self.coords)

    def valuation(self) -> Valuation:
        return valuation(self)

    def __eq__(self, other):
        if isinstance(other, (int, PadicScalar)):
            other = self._coerce(other)
        if not isinstance(other, AlgebraElement):
            return NotImplemented
        return self.parent == other.parent and self.coords == other.coords

    def __hash__(self):
        return hash((self.parent, self.coords))

    def to_json(self) -> Dict[str, Any]:
        return {
            "basis": ["*".join(f"{g}^{e}" for g, e in zip(self.parent.generators, ex) if e) or "1"
                      for ex in self.parent.basis],
            "coords": list(self.coords),
        }

    def __repr__(self):
        parts = []
        for ex, c in zip(self.parent.basis, self.coords):
            if not c:
                continue
            mono = "*".join(
                g if e == 1 else f"{g}^{e}" for g, e in zip(self.parent.generators, ex) if e
            )
            parts.append(f"{c}*{mono}" if mono and c != 1 else (mono or str(c)))
        return " + ".join(parts) if parts else "0"


RelationSpec = Union[Mapping[str, Any], Mapping[Exponent, int]]


def _parse_relation(i: int, names: Sequence[str], spec: Mapping[str, Any]) -> Terms:
    ngen = len(names)
    terms: Terms = {}
    if "coeffs" in spec:
        for d, c in enumerate(spec["coeffs"]):
            if isinstance(c, int):
                items = [((0,) * i, c)]
            else:
                items = list(c.items())
            for lower, val in items:
                if len(lower) > i:
                    raise NonTriangularPresentation(
                        f"coefficient of relation for {names[i]} mentions a later generator"
                    )
                exps = tuple(lower) + (0,) * (i - len(lower)) + (d,) + (0,) * (ngen - i - 1)
                if val:
                    terms[exps] = terms.get(exps, 0) + val
        return terms
    for term in spec.get("terms", []):
        exps = [0] * ngen
        for name, e in term["exps"].items():
            if name not in names:
                raise UnknownGenerator(f"unknown generator {name!r} in relation for {names[i]}")
            exps[names.index(name)] = e
        key = tuple(exps)
        terms[key] = terms.get(key, 0) + term["coeff"]
    return {k: v for k, v in terms.items() if v}


@logged_operation(logger, summarize=lambda alg: {"rank": alg.rank})
def make_finite_algebra(
    p: int,
    n: int,
    relations: Sequence[Mapping[str, Any]],
    generators: Optional[Sequence[str]] = None,
    e: Optional[int] = None,
) -> FiniteAlgebra:
    """Build a FiniteAlgebra from relation specs.

    Each relation is {"var": name, "coeffs": [c_0, ..., 1]} (coefficients low to
    high, integers or dicts from lower-generator exponent tuples to integers)
    or {"var": name, "terms": [{"exps": {name: e, ...}, "coeff": c}, ...]}.
    """
    check_prime(p)
    names = list(generators) if generators else [r["var"] for r in relations]
    if [r["var"] for r in relations] != names:
        raise NonTriangularPresentation(
            "relations must be listed in generator order",
            context={"generators": names, "relations": [r["var"] for r in relations]},
        )
    parsed = [_parse_relation(i, names, r) for i, r in enumerate(relations)]
    return FiniteAlgebra(p, n, names, parsed, e)


def reduce(
    algebra_or_element: Union[FiniteAlgebra, AlgebraElement],
    terms: Optional[Iterable[Tuple[Mapping[str, int], int]]] = None,
) -> AlgebraElement:
    """Normal form of an element, or of a polynomial given as (exponents, coefficient) pairs."""
    if isinstance(algebra_or_element, AlgebraElement):
        return algebra_or_element
    algebra = algebra_or_element
    collected: Terms = {}
    for exps, c in terms or []:
        key = algebra.monomial(exps)
        collected[key] = collected.get(key, 0) + c
    return algebra.reduce_terms(collected)


def _norm_valuation(x: AlgebraElement, floor: Fraction) -> Valuation:
    """val(x) = val(N(x)) / rank; a norm that vanishes mod p^n only bounds it from below."""
    alg = x.parent
    det = int(sympy.Matrix(alg.multiplication_matrix(x)).det(method="bareiss")) % alg.modulus
    if det == 0:
        return Valuation(max(floor, Fraction(alg.n, alg.rank)), capped=True)
    return Valuation(Fraction(vp(det, alg.p), alg.rank))


def valuation(x: AlgebraElement) -> Valuation:
    """Normalized valuation of x, with val(p) = 1."""
    alg = x.parent
    if x.is_zero():
        return Valuation(Fraction(alg.n), capped=True)
    weights = [w for _, w in alg.generator_shapes()]
    candidates: List[Fraction] = []
    for exps, c in alg.shifted_coordinates(x).items():
        base = sum((e * w for e, w in zip(exps, weights)), Fraction(0))
        candidates.append(vp(c, alg.p) + base)
    if not candidates:
        return Valuation(Fraction(alg.n), capped=True)
    best = min(candidates)
    if best >= alg.n:
        return Valuation(Fraction(alg.n), capped=True)
    if candidates.count(best) == 1:
        return Valuation(best)
    return _norm_valuation(x, best)


def cyclotomic_relation(var: str, p: int, k: int) -> Dict[str, Any]:
    """Relation spec for the p^k-th cyclotomic polynomial."""
    return {"var": var, "coeffs": _cyclotomic_coeffs(p ** k)}


def evaluate_integer_poly(coeffs: Sequence[int], x: AlgebraElement) -> AlgebraElement:
    """Horner evaluation of sum c_i x^i."""
    result = x.parent.zero()
    for c in reversed(coeffs):
        result = result * x + c
    return result
