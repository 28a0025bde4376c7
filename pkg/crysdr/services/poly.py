"""
Multivariate polynomials over Z/p^n or over a FiniteAlgebra.

Exponents are integer numerators over a fixed denominator p^k per ring, so
``monoid`` variables range over (1/p^k)N while ordinary variables keep
integral exponents. An optional total-degree cap truncates eagerly.
"""

from fractions import Fraction
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from crysdr.core.exceptions import (
    FractionalExponentOnNonMonoidVariable,
    MixedRings,
    NotCharP,
    UnknownGenerator,
)
from crysdr.core.logging import ServiceLogger
from crysdr.services.base_arith import AlgebraElement, FiniteAlgebra, check_prime

logger = ServiceLogger("poly")

Exps = Tuple[int, ...]
Coeff = Union[int, AlgebraElement]


class PolyRing:
    """Polynomial ring (or monoid algebra) with a fixed exponent denominator."""

    def __init__(
        self,
        variables: Sequence[str],
        p: int,
        n: int = 1,
        algebra: Optional[FiniteAlgebra] = None,
        root_depth: int = 0,
        monoid_vars: Iterable[str] = (),
        degree_cap: Optional[int] = None,
        twist_of: Optional["PolyRing"] = None,
    ):
        check_prime(p)
        if algebra is not None and (algebra.p, algebra.n) != (p, n):
            raise MixedRings("coefficient algebra does not match (p, n)")
        self.variables: Tuple[str, ...] = tuple(variables)
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("duplicate variable names")
        self.p = p
        self.n = n
        self.modulus = p ** n
        self.algebra = algebra
        self.root_depth = root_depth
        self.denom = p ** root_depth
        self.monoid_vars = frozenset(monoid_vars)
        unknown = self.monoid_vars - set(self.variables)
        if unknown:
            raise UnknownGenerator(f"unknown monoid variables {sorted(unknown)}")
        self.degree_cap = degree_cap
        self.twist_of = twist_of

    # identity

    def _key(self):
        return (self.variables, self.p, self.n, self.algebra, self.root_depth,
                self.monoid_vars, self.degree_cap, self.twist_of is not None)

    def __eq__(self, other):
        return isinstance(other, PolyRing) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        base = f"Z/{self.p}^{self.n}" if self.algebra is None else repr(self.algebra)
        tag = "^(1)" if self.twist_of is not None else ""
        return f"PolyRing({base}[{','.join(self.variables)}]{tag}, denom={self.denom}, cap={self.degree_cap})"

    @property
    def is_char_p(self) -> bool:
        return self.n == 1

    def with_options(self, **changes) -> "PolyRing":
        params = dict(
            variables=self.variables, p=self.p, n=self.n, algebra=self.algebra,
            root_depth=self.root_depth, monoid_vars=self.monoid_vars,
            degree_cap=self.degree_cap, twist_of=self.twist_of,
        )
        params.update(changes)
        if "n" in changes and self.algebra is not None and "algebra" not in changes:
            params["algebra"] = self.algebra.at_precision(changes["n"])
        return PolyRing(**params)

    def at_precision(self, n: int) -> "PolyRing":
        return self.with_options(n=n)

    # coefficients

    def norm(self, c: Coeff) -> Coeff:
        if self.algebra is None:
            if isinstance(c, AlgebraElement):
                raise MixedRings("algebra coefficient in a scalar polynomial ring")
            return int(c) % self.modulus
        if isinstance(c, AlgebraElement):
            if c.parent != self.algebra:
                c = c.change_precision(self.algebra)
            return c
        return self.algebra.from_int(int(c))

    def coeff_is_zero(self, c: Coeff) -> bool:
        return c == 0 if self.algebra is None else c.is_zero()

    # constructors

    def zero(self) -> "Poly":
        return Poly(self, {})

    def one(self) -> "Poly":
        return self.from_int(1)

    def from_int(self, c: int) -> "Poly":
        return Poly(self, {self.unit_exps(): c})

    def constant(self, c: Coeff) -> "Poly":
        return Poly(self, {self.unit_exps(): c})

    def unit_exps(self) -> Exps:
        return (0,) * len(self.variables)

    def gen(self, name: str) -> "Poly":
        return self.monomial({name: 1})

    def gens(self) -> List["Poly"]:
        return [self.gen(v) for v in self.variables]

    def monomial(self, exps: Mapping[str, Union[int, Fraction]], coeff: Coeff = 1) -> "Poly":
        return Poly(self, {self.exps_from(exps): coeff})

    def exps_from(self, exps: Mapping[str, Union[int, Fraction]]) -> Exps:
        out = [0] * len(self.variables)
        for name, e in exps.items():
            if name not in self.variables:
                raise UnknownGenerator(f"unknown variable {name!r}", context={"variables": list(self.variables)})
            num = Fraction(e) * self.denom
            if num.denominator != 1:
                raise FractionalExponentOnNonMonoidVariable(
                    f"exponent {e} of {name} needs denominator beyond {self.denom}"
                )
            out[self.variables.index(name)] = int(num)
        return self.check_exps(tuple(out))

    def check_exps(self, exps: Exps) -> Exps:
        for name, e in zip(self.variables, exps):
            if e < 0:
                raise FractionalExponentOnNonMonoidVariable(f"negative exponent on {name}")
            if e % self.denom and name not in self.monoid_vars:
                raise FractionalExponentOnNonMonoidVariable(
                    f"fractional exponent {Fraction(e, self.denom)} on non-monoid variable {name}"
                )
        return exps

    def degree_of(self, exps: Exps) -> Fraction:
        return Fraction(sum(exps), self.denom)

    def within_cap(self, exps: Exps) -> bool:
        return self.degree_cap is None or sum(exps) <= self.degree_cap * self.denom

    def monomials_up_to(self, degree: int) -> List[Exps]:
        """Integral-exponent monomials of total degree <= degree, graded lex."""
        out: List[Exps] = []

        def rec(prefix: List[int], remaining: int, idx: int):
            if idx == len(self.variables):
                out.append(tuple(e * self.denom for e in prefix))
                return
            for e in range(remaining + 1):
                rec(prefix + [e], remaining - e, idx + 1)

        rec([], degree, 0)
        return sorted(out, key=lambda ex: (sum(ex), ex))

    def from_json(self, data: Mapping[str, Any]) -> "Poly":
        if list(data["vars"]) != list(self.variables) or data.get("denom", 1) != self.denom:
            raise MixedRings("serialized polynomial does not match ring")
        return Poly(self, {tuple(t["exps"]): t["coeff"] for t in data["terms"]})


class Poly:
    """Element of a PolyRing; immutable."""

    __slots__ = ("ring", "terms")

    def __init__(self, ring: PolyRing, terms: Mapping[Exps, Coeff]):
        self.ring = ring
        clean: Dict[Exps, Coeff] = {}
        for exps, c in terms.items():
            if not ring.within_cap(exps):
                continue
            c = ring.norm(c)
            if not ring.coeff_is_zero(c):
                clean[exps] = c
        self.terms = clean

    # structure

    def _check(self, other: "Poly") -> None:
        if self.ring != other.ring:
            raise MixedRings("polynomials over different rings", context={
                "left": repr(self.ring), "right": repr(other.ring)})

    def _lift(self, other: Any) -> "Poly":
        if isinstance(other, Poly):
            self._check(other)
            return other
        if isinstance(other, (int, AlgebraElement)):
            return self.ring.constant(other)
        raise TypeError(f"cannot combine Poly with {type(other).__name__}")

    def is_zero(self) -> bool:
        return not self.terms

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def sorted_terms(self) -> List[Tuple[Exps, Coeff]]:
        return sorted(self.terms.items(), key=lambda kv: (sum(kv[0]), kv[0]))

    def coefficient(self, exps: Exps) -> Coeff:
        return self.terms.get(exps, self.ring.norm(0))

    def constant_term(self) -> Coeff:
        return self.coefficient(self.ring.unit_exps())

    def total_degree(self) -> Fraction:
        if not self.terms:
            return Fraction(-1)
        return max(self.ring.degree_of(e) for e in self.terms)

    def variables_used(self) -> List[str]:
        used = set()
        for exps in self.terms:
            used.update(v for v, e in zip(self.ring.variables, exps) if e)
        return [v for v in self.ring.variables if v in used]

    # arithmetic

    def __add__(self, other):
        o = self._lift(other)
        out = dict(self.terms)
        for e, c in o.terms.items():
            out[e] = out[e] + c if e in out else c
        return Poly(self.ring, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.ring, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if isinstance(other, int):
            return Poly(self.ring, {e: c * other for e, c in self.terms.items()})
        return poly_mul(self, self._lift(other))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not supported")
        result = self.ring.one()
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other):
        if isinstance(other, int):
            other = self.ring.from_int(other)
        if not isinstance(other, Poly):
            return NotImplemented
        return self.ring == other.ring and self.terms == other.terms

    def __hash__(self):
        return hash((self.ring, tuple(sorted((e, repr(c)) for e, c in self.terms.items()))))

    def reduce_precision(self, n: int) -> "Poly":
        target = self.ring.at_precision(n)
        return Poly(target, {e: (c if target.algebra is None else c.change_precision(target.algebra))
                             for e, c in self.terms.items()})

    def to_json(self) -> Dict[str, Any]:
        return {
            "vars": list(self.ring.variables),
            "denom": self.ring.denom,
            "terms": [
                {"exps": list(e), "coeff": c if isinstance(c, int) else list(c.coords)}
                for e, c in self.sorted_terms()
            ],
        }

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for exps, c in self.sorted_terms():
            mono = []
            for v, e in zip(self.ring.variables, exps):
                if not e:
                    continue
                q = Fraction(e, self.ring.denom)
                mono.append(v if q == 1 else f"{v}^{q}")
            m = "*".join(mono)
            cs = repr(c) if not isinstance(c, int) else str(c)
            parts.append(m if (m and cs == "1") else (f"{cs}*{m}" if m else cs))
        return " + ".join(parts)


def poly_mul(a: Poly, b: Poly) -> Poly:
    """Product, truncated at the ring's degree cap."""
    a._check(b)
    ring = a.ring
    out: Dict[Exps, Coeff] = {}
    for ea, ca in a.terms.items():
        for eb, cb in b.terms.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            if not ring.within_cap(e):
                continue
            c = ca * cb
            out[e] = out[e] + c if e in out else c
    return Poly(ring, out)


def _monomial_power(target: PolyRing, image: Poly, num: int, denom: int) -> Poly:
    """image^(num/denom) for a monomial image."""
    (exps, c), = image.terms.items()
    if num % denom:
        if not (c == 1 if isinstance(c, int) else c.is_one()):
            raise FractionalExponentOnNonMonoidVariable(
                "fractional power of a monomial with non-unit coefficient"
            )
        new = []
        for e in exps:
            q = Fraction(e * num, denom)
            if q.denominator != 1:
                raise FractionalExponentOnNonMonoidVariable(
                    f"exponent {Fraction(e, target.denom) * Fraction(num, denom)} leaves the monoid"
                )
            new.append(int(q))
        return Poly(target, {target.check_exps(tuple(new)): 1})
    return image ** (num // denom)


def substitute(f: Poly, assignments: Mapping[str, Poly], target: Optional[PolyRing] = None) -> Poly:
    """Ring map defined on generators; unassigned variables map to the same name in the target."""
    if target is None:
        images = list(assignments.values())
        target = images[0].ring if images else f.ring
    resolved: Dict[str, Poly] = {}
    for v in f.ring.variables:
        if v in assignments:
            img = assignments[v]
            if img.ring != target:
                raise MixedRings(f"image of {v} lives in a different ring")
            resolved[v] = img
        elif v in target.variables:
            resolved[v] = target.gen(v)
        elif v in f.variables_used():
            raise UnknownGenerator(f"no assignment for variable {v!r}")
    result = target.zero()
    cache: Dict[Tuple[str, int], Poly] = {}
    for exps, c in f.terms.items():
        term = target.constant(c if isinstance(c, int) else c)
        for v, e in zip(f.ring.variables, exps):
            if not e:
                continue
            key = (v, e)
            if key not in cache:
                img = resolved[v]
                if e % f.ring.denom and not img.is_monomial():
                    raise FractionalExponentOnNonMonoidVariable(
                        f"fractional exponent of {v} cannot be substituted by a non-monomial"
                    )
                if e % f.ring.denom == 0:
                    cache[key] = img ** (e // f.ring.denom)
                else:
                    cache[key] = _monomial_power(target, img, e, f.ring.denom)
            term = term * cache[key]
        result = result + term
    return result


def frobenius_twist(f: Poly, style: str = "variable") -> Poly:
    """Frobenius twist of a polynomial over F_p.

    style="variable" moves f to the twist ring B^(1) (same names, tagged as a
    twist); style="coefficient" raises coefficients to the p-th power.
    """
    ring = f.ring
    if not ring.is_char_p:
        raise NotCharP("Frobenius twist needs coefficients in F_p", context={"n": ring.n})
    if style == "coefficient":
        return Poly(ring, {e: c ** ring.p for e, c in f.terms.items()})
    if style != "variable":
        raise ValueError(f"unknown twist style {style!r}")
    twist = twist_ring(ring)
    return Poly(twist, dict(f.terms))


def twist_ring(ring: PolyRing) -> PolyRing:
    if not ring.is_char_p:
        raise NotCharP("Frobenius twist needs coefficients in F_p")
    return ring.with_options(twist_of=ring, degree_cap=None)


def relative_frobenius(f: Poly, target: Optional[PolyRing] = None) -> Poly:
    """The F_p-algebra map B^(1) -> B sending x^(1) to x^p."""
    if f.ring.twist_of is None:
        raise NotCharP("relative Frobenius is defined on twist rings only")
    target = target or f.ring.twist_of
    p = f.ring.p
    return Poly(target, {tuple(e * p for e in exps): c for exps, c in f.terms.items()})


def twist_algebra(algebra: FiniteAlgebra) -> FiniteAlgebra:
    """Frobenius twist of a finite F_p-algebra: relations with coefficients raised to the p-th power."""
    if algebra.n != 1:
        raise NotCharP("twist of a finite algebra needs n = 1")
    p = algebra.p
    rels = [{e: pow(c, p, p) for e, c in rel.items() if c % p} for rel in algebra.relations]
    return FiniteAlgebra(p, 1, algebra.generators, rels)


def relative_frobenius_algebra(x: AlgebraElement, target: FiniteAlgebra) -> AlgebraElement:
    """x^(1) -> x^p on a twisted finite algebra."""
    terms = {tuple(e * target.p for e in exps): c for exps, c in zip(x.parent.basis, x.coords) if c}
    return target.reduce_terms(terms)
