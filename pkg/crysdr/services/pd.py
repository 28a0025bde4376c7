"""
Divided-power algebras and pd-envelopes.

``PDAlgebra`` is the free pd-polynomial algebra B<y_1..y_r> over a base ring
B, truncated at total pd-weight m. Any base works as long as it provides
zero()/one()/from_int() and its elements support +, -, *, integer scaling
and is_zero(); this covers polynomial rings, Z/p^n (a polynomial ring with
no variables) and truncated Witt vectors.

``PDEnvelope`` models D_A(f_1..f_r) = A<y>/(y_i - f_i) for a sequence that
is monic and triangular in paired variables. Writing e_K = prod γ_{K_i p}(y_i),
every element has a unique normal form sum_K a_K e_K with each a_K reduced
modulo (f_1^p, ..., f_r^p), using

    γ_{kp+r}(y) = f^r e_k / ((kp+1)...(kp+r))      (0 <= r < p)
    f^p e_k     = ((k+1)p)!/(kp)! * e_{k+1}
"""

from fractions import Fraction
from itertools import product
from math import comb, factorial
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from crysdr.core.exceptions import (
    CapTooSmall,
    MixedParents,
    NonzeroConstantTerm,
    NotEisenstein,
    NotModP,
    NotRegularSequence,
)
from crysdr.core.logging import ServiceLogger
from crysdr.services.base_arith import FiniteAlgebra, check_prime, make_finite_algebra
from crysdr.services.poly import Poly, PolyRing
from crysdr.utils.combinatorics import exact_div, gamma_composition, rational_mod
from crysdr.utils.linalg import howell_form, rank_mod_p
from crysdr.utils.time_utils import logged_operation

logger = ServiceLogger("pd")

PDExps = Tuple[int, ...]


def _multinomial_power(j: int, e: int) -> int:
    """(j e)! / (e!)^j, the integer with γ_e(x)^j = c γ_{je}(x)."""
    return exact_div(factorial(j * e), factorial(e) ** j)


class PDAlgebra:
    """Truncated free divided-power algebra over a base ring."""

    def __init__(self, base: Any, variables: Sequence[str], weight_cap: int):
        if weight_cap < 0:
            raise CapTooSmall("weight cap must be non-negative")
        self.base = base
        self.variables: Tuple[str, ...] = tuple(variables)
        self.weight_cap = weight_cap

    def __eq__(self, other):
        return (isinstance(other, PDAlgebra) and self.base == other.base
                and self.variables == other.variables and self.weight_cap == other.weight_cap)

    def __hash__(self):
        return hash((self.base, self.variables, self.weight_cap))

    def __repr__(self):
        return f"PDAlgebra({self.base!r}<{','.join(self.variables)}>, cap={self.weight_cap})"

    def unit_exps(self) -> PDExps:
        return (0,) * len(self.variables)

    def zero(self) -> "PDElement":
        return PDElement(self, {})

    def one(self) -> "PDElement":
        return self.constant(self.base.one())

    def from_int(self, c: int) -> "PDElement":
        return self.constant(self.base.from_int(c))

    def constant(self, c: Any) -> "PDElement":
        return PDElement(self, {self.unit_exps(): c})

    def gamma_var(self, name: str, j: int, coeff: Any = None) -> "PDElement":
        """γ_j of a pd-variable."""
        exps = [0] * len(self.variables)
        exps[self.variables.index(name)] = j
        c = self.base.one() if coeff is None else coeff
        return PDElement(self, {tuple(exps): c})

    def var(self, name: str) -> "PDElement":
        return self.gamma_var(name, 1)

    def basis(self, max_weight: Optional[int] = None) -> List[PDExps]:
        top = self.weight_cap if max_weight is None else min(max_weight, self.weight_cap)
        out = [e for e in product(range(top + 1), repeat=len(self.variables)) if sum(e) <= top]
        return sorted(out, key=lambda e: (sum(e), e))


class PDElement:
    """Element of a PDAlgebra; terms map pd-exponents to base coefficients."""

    __slots__ = ("parent", "terms", "truncated")

    def __init__(self, parent: PDAlgebra, terms: Mapping[PDExps, Any], truncated: bool = False):
        self.parent = parent
        clean = {}
        for exps, c in terms.items():
            if isinstance(c, int):
                c = parent.base.from_int(c)
            if sum(exps) > parent.weight_cap:
                if not c.is_zero():
                    truncated = True
                continue
            if not c.is_zero():
                clean[exps] = c
        self.terms: Dict[PDExps, Any] = clean
        self.truncated = truncated

    def _check(self, other: "PDElement") -> None:
        if self.parent != other.parent:
            raise MixedParents("pd-elements of different algebras",
                               context={"left": repr(self.parent), "right": repr(other.parent)})

    def _lift(self, other: Any) -> "PDElement":
        if isinstance(other, PDElement):
            self._check(other)
            return other
        if isinstance(other, int):
            return self.parent.from_int(other)
        return self.parent.constant(other)

    def is_zero(self) -> bool:
        return not self.terms

    def constant_term(self):
        return self.terms.get(self.parent.unit_exps(), self.parent.base.zero())

    def min_weight(self) -> Optional[int]:
        """Lowest pd-weight present (the pd-filtration level), None for zero."""
        if not self.terms:
            return None
        return min(sum(e) for e in self.terms)

    def weight_part(self, w: int) -> "PDElement":
        return PDElement(self.parent, {e: c for e, c in self.terms.items() if sum(e) == w})

    def coefficient(self, exps: PDExps):
        return self.terms.get(tuple(exps), self.parent.base.zero())

    def sorted_terms(self) -> List[Tuple[PDExps, Any]]:
        return sorted(self.terms.items(), key=lambda kv: (sum(kv[0]), kv[0]))

    def map_coefficients(self, fn, parent: Optional[PDAlgebra] = None) -> "PDElement":
        target = parent or self.parent
        return PDElement(target, {e: fn(c) for e, c in self.terms.items()}, self.truncated)

    def __add__(self, other):
        o = self._lift(other)
        out = dict(self.terms)
        for e, c in o.terms.items():
            out[e] = out[e] + c if e in out else c
        return PDElement(self.parent, out, self.truncated or o.truncated)

    __radd__ = __add__

    def __neg__(self):
        return PDElement(self.parent, {e: -c for e, c in self.terms.items()}, self.truncated)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if isinstance(other, int):
            return PDElement(self.parent, {e: c * other for e, c in self.terms.items()}, self.truncated)
        return pd_mul(self, self._lift(other))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        result = self.parent.one()
        for _ in range(k):
            result = result * self
        return result

    def __eq__(self, other):
        if isinstance(other, int):
            other = self.parent.from_int(other)
        if not isinstance(other, PDElement):
            return NotImplemented
        if self.parent != other.parent or self.terms.keys() != other.terms.keys():
            return False
        return all(self.terms[e] == other.terms[e] for e in self.terms)

    def __hash__(self):
        return hash((self.parent, tuple(sorted(self.terms))))

    def to_json(self) -> Dict[str, Any]:
        def enc(c):
            if hasattr(c, "to_json"):
                return c.to_json()
            return repr(c)

        return {
            "pd_vars": list(self.parent.variables),
            "weight_cap": self.parent.weight_cap,
            "truncated": self.truncated,
            "terms": [{"gamma": list(e), "coeff": enc(c)} for e, c in self.sorted_terms()],
        }

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.sorted_terms():
            mono = "*".join(
                (v if k == 1 else f"g{k}({v})") for v, k in zip(self.parent.variables, e) if k
            )
            cs = repr(c)
            parts.append(mono if (mono and cs == "1") else (f"({cs})*{mono}" if mono else cs))
        return " + ".join(parts)


def pd_mul(a: PDElement, b: PDElement) -> PDElement:
    """γ_a(x)γ_b(x) = binom(a+b, a)γ_{a+b}(x), extended bilinearly and truncated."""
    a._check(b)
    cap = a.parent.weight_cap
    out: Dict[PDExps, Any] = {}
    truncated = a.truncated or b.truncated
    for ea, ca in a.terms.items():
        wa = sum(ea)
        for eb, cb in b.terms.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            if wa + sum(eb) > cap:
                truncated = True
                continue
            k = 1
            for x, y in zip(ea, eb):
                if x and y:
                    k *= comb(x + y, x)
            c = (ca * cb) * k if k != 1 else ca * cb
            out[e] = out[e] + c if e in out else c
    return PDElement(a.parent, out, truncated)


def _gamma_of_term(k: int, exps: PDExps, c: Any, parent: PDAlgebra) -> PDElement:
    """γ_k(c·prod γ_{e_i}(y_i)) for a single term with positive weight."""
    if k == 0:
        return parent.one()
    weight = k * sum(exps)
    if weight > parent.weight_cap:
        return PDElement(parent, {}, truncated=True)
    carrier = next(i for i, e in enumerate(exps) if e)
    factor = gamma_composition(k, exps[carrier])
    for i, e in enumerate(exps):
        if e and i != carrier:
            factor *= _multinomial_power(k, e)
    return PDElement(parent, {tuple(k * e for e in exps): (c ** k) * factor})


def gamma(k: int, u: PDElement) -> PDElement:
    """γ_k(u) for u in the pd-ideal, via γ_k(u+v) = sum γ_i(u)γ_{k-i}(v)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    parent = u.parent
    if not u.constant_term().is_zero():
        raise NonzeroConstantTerm("divided powers need an element of the pd-ideal",
                                  context={"k": k})
    acc: List[PDElement] = [parent.one()] + [parent.zero()] * k
    for exps, c in u.sorted_terms():
        g = [_gamma_of_term(j, exps, c, parent) for j in range(k + 1)]
        acc = [
            sum((acc[j - i] * g[i] for i in range(j + 1)), parent.zero())
            for j in range(k + 1)
        ]
    result = acc[k]
    if u.truncated:
        result.truncated = True
    return result


def gamma_plus_p_multiple(k: int, u: PDElement, d: Any) -> PDElement:
    """γ_k(u + p·d) for u in the pd-ideal and d a base element, using γ_m(p·d) = (p^m/m!) d^m."""
    parent = u.parent
    p, n = parent.base.p, parent.base.n
    result = parent.zero()
    power = parent.base.one()
    for m in range(k + 1):
        scalar = rational_mod(Fraction(p ** m, factorial(m)), p, n)
        if scalar:
            result = result + gamma(k - m, u) * parent.constant(power * scalar)
        power = power * d
    return result


def log_one_plus(z: PDElement) -> PDElement:
    """log(1 + z) = sum_{j>=1} (-1)^{j+1} (j-1)! γ_j(z), finite under the weight cap."""
    parent = z.parent
    result = parent.zero()
    floor = z.min_weight()
    if floor is None:
        return result
    for j in range(1, parent.weight_cap // floor + 1):
        term = gamma(j, z) * factorial(j - 1)
        result = result + term if j % 2 else result - term
    return result


def _general_binomial(N: int, i: int) -> int:
    if N >= 0:
        return comb(N, i)
    return (-1) ** i * comb(i - N - 1, i)


def binomial_power_minus_one(y: PDElement, exponent: int) -> PDElement:
    """(1 + y)^N - 1 = sum_{i>=1} binom(N, i) i! γ_i(y) for y in the pd-ideal.

    Negative N is allowed; binom(N, i) is then (-1)^i binom(i - N - 1, i).
    """
    parent = y.parent
    result = parent.zero()
    floor = y.min_weight()
    if floor is None or exponent == 0:
        return result
    top = parent.weight_cap // floor
    if exponent > 0:
        top = min(exponent, top)
    for i in range(1, top + 1):
        result = result + gamma(i, y) * (_general_binomial(exponent, i) * factorial(i))
    return result


# pd-envelopes

class EnvelopeElement:
    """Normal form sum_K a_K e_K of an envelope element."""

    __slots__ = ("envelope", "parts", "truncated")

    def __init__(self, envelope: "PDEnvelope", parts: Mapping[PDExps, Poly], truncated: bool = False):
        self.envelope = envelope
        self.parts = {K: a for K, a in parts.items() if not a.is_zero()}
        self.truncated = truncated

    def __eq__(self, other):
        if not isinstance(other, EnvelopeElement):
            return NotImplemented
        return self.envelope is other.envelope and self.parts == other.parts

    def __hash__(self):
        return hash(tuple(sorted(self.parts)))

    def _check(self, other: "EnvelopeElement") -> None:
        if self.envelope is not other.envelope:
            raise MixedParents("elements of different envelopes")

    def __add__(self, other: "EnvelopeElement") -> "EnvelopeElement":
        self._check(other)
        out = dict(self.parts)
        for K, a in other.parts.items():
            out[K] = out[K] + a if K in out else a
        return EnvelopeElement(self.envelope, out, self.truncated or other.truncated)

    def __neg__(self) -> "EnvelopeElement":
        return EnvelopeElement(self.envelope, {K: -a for K, a in self.parts.items()}, self.truncated)

    def __sub__(self, other: "EnvelopeElement") -> "EnvelopeElement":
        return self + (-other)

    def __mul__(self, c: int) -> "EnvelopeElement":
        return EnvelopeElement(self.envelope, {K: a * c for K, a in self.parts.items()}, self.truncated)

    __rmul__ = __mul__

    def congruent(self, other: "EnvelopeElement", r: int) -> bool:
        """Equal modulo p^r; normal forms reduce coordinatewise."""
        self._check(other)
        modulus = self.envelope.p ** r
        return all(x % modulus == 0 for x in (self - other).vector())

    def is_zero(self) -> bool:
        return not self.parts

    def vector(self) -> List[int]:
        """Coordinates on the envelope's window basis."""
        env = self.envelope
        out = [0] * len(env.window_basis)
        for K, a in self.parts.items():
            for alpha, c in a.terms.items():
                idx = env.window_index.get((alpha, K))
                if idx is not None:
                    out[idx] = c
        return out

    def to_json(self) -> Dict[str, Any]:
        return {
            "truncated": self.truncated,
            "parts": [{"e": list(K), "coeff": self.parts[K].to_json()} for K in sorted(self.parts)],
        }

    def __repr__(self):
        names = self.envelope.pd_names
        out = []
        for K in sorted(self.parts):
            mono = "*".join(f"g{k * self.envelope.p}({v})" for v, k in zip(names, K) if k)
            out.append(f"({self.parts[K]!r})" + (f"*{mono}" if mono else ""))
        return " + ".join(out) if out else "0"


class PDEnvelope:
    """Truncated pd-envelope D_A(f_1..f_r) of a triangular monic regular sequence."""

    def __init__(self, ambient: PolyRing, sequence: Sequence[Poly], weight_cap: int,
                 pd_names: Optional[Sequence[str]] = None, pd_cap: Optional[int] = None):
        if ambient.algebra is not None:
            raise NotRegularSequence("envelopes are built over Z/p^n polynomial rings")
        self.ambient = ambient
        self.p = ambient.p
        self.n = ambient.n
        self.weight_cap = weight_cap
        self.work_ring = ambient.with_options(degree_cap=None)
        self.sequence = [Poly(self.work_ring, f.terms) for f in sequence]
        self.pd_names = tuple(pd_names or [f"y{i + 1}" for i in range(len(self.sequence))])
        # the lifting algebra may carry more pd-weight than the envelope keeps
        self.pd_cap = weight_cap if pd_cap is None else max(pd_cap, weight_cap)
        self.pd_algebra = PDAlgebra(ambient, self.pd_names, self.pd_cap)
        self.paired, self.degrees = self._pair_variables()
        self.powers = [f ** self.p for f in self.sequence]
        self.free_vars = [i for i in range(len(ambient.variables)) if i not in self.paired]
        if self.free_vars and ambient.degree_cap is None:
            raise CapTooSmall("unpaired ambient variables need a degree cap on A")
        self.window_basis = self._window_basis()
        self.window_index = {key: i for i, key in enumerate(self.window_basis)}

    # setup

    def _pair_variables(self) -> Tuple[List[int], List[int]]:
        """Match f_i with a variable in which it is monic, triangularly."""
        used: List[int] = []
        degrees: List[int] = []
        nvars = len(self.work_ring.variables)
        for idx, f in enumerate(self.sequence):
            choice = None
            for v in range(nvars):
                if v in used:
                    continue
                d = max((e[v] for e in f.terms), default=0)
                if d == 0:
                    continue
                lead = tuple(d if j == v else 0 for j in range(nvars))
                if f.terms.get(lead) != 1:
                    continue
                if any(e[v] == d and e != lead for e in f.terms):
                    continue
                choice = (v, d)
                break
            if choice is None:
                raise NotRegularSequence(
                    "sequence element is not monic in a fresh variable",
                    context={"index": idx, "element": repr(f)},
                )
            used.append(choice[0])
            degrees.append(choice[1])
        # later elements may not mention earlier paired variables' partners out of order
        for i, f in enumerate(self.sequence):
            for j in range(i + 1, len(self.sequence)):
                if any(e[used[j]] for e in f.terms):
                    raise NotRegularSequence(
                        "sequence is not triangular in its paired variables",
                        context={"index": i},
                    )
        return used, degrees

    def _window_basis(self) -> List[Tuple[Tuple[int, ...], PDExps]]:
        nvars = len(self.work_ring.variables)
        ranges = []
        for v in range(nvars):
            if v in self.paired:
                ranges.append(range(self.p * self.degrees[self.paired.index(v)]))
            else:
                ranges.append(range((self.ambient.degree_cap or 0) + 1))
        alphas = [a for a in product(*ranges) if self._alpha_in_cap(a)]
        alphas.sort(key=lambda a: (sum(a), a))
        Ks = [K for K in product(range(self.weight_cap // self.p + 1), repeat=len(self.sequence))
              if sum(K) * self.p <= self.weight_cap]
        Ks.sort(key=lambda K: (sum(K), K))
        return [(a, K) for K in Ks for a in alphas]

    def _alpha_in_cap(self, alpha: Tuple[int, ...]) -> bool:
        if not self.free_vars:
            return True
        return sum(alpha[v] for v in self.free_vars) <= self.ambient.degree_cap

    # normal forms

    def _divide(self, a: Poly, divisors: Optional[Sequence[Poly]] = None,
                scale: Optional[int] = None) -> Tuple[Poly, List[Poly], bool]:
        """a = rem + sum q_i g_i with rem reduced; g_i = f_i^p unless divisors are given."""
        ring = self.work_ring
        divisors = self.powers if divisors is None else divisors
        scale = self.p if scale is None else scale
        work = dict(a.terms)
        rem: Dict[Tuple[int, ...], int] = {}
        quots: List[Dict[Tuple[int, ...], int]] = [dict() for _ in self.sequence]
        truncated = False
        modulus = ring.modulus
        while work:
            exps, c = work.popitem()
            c %= modulus
            if not c:
                continue
            hit = None
            for i in range(len(self.sequence) - 1, -1, -1):
                v = self.paired[i]
                if exps[v] >= scale * self.degrees[i]:
                    hit = i
                    break
            if hit is None:
                if self._alpha_in_cap(exps):
                    rem[exps] = (rem.get(exps, 0) + c) % modulus
                else:
                    truncated = True
                continue
            v = self.paired[hit]
            shift = list(exps)
            shift[v] -= scale * self.degrees[hit]
            shift = tuple(shift)
            quots[hit][shift] = (quots[hit].get(shift, 0) + c) % modulus
            for ge, gc in divisors[hit].terms.items():
                key = tuple(s + g for s, g in zip(shift, ge))
                if key == exps:
                    continue
                work[key] = (work.get(key, 0) - c * gc) % modulus
        return Poly(ring, rem), [Poly(ring, q) for q in quots], truncated

    def split_ideal(self, a: Poly) -> Tuple[PDElement, Poly]:
        """a = sum q_i y_i + rem with rem reduced modulo (f_1..f_r); rem = 0 iff a is in the pd-ideal."""
        rem, quots, _ = self._divide(Poly(self.work_ring, a.terms), self.sequence, 1)
        terms = {}
        for i, q in enumerate(quots):
            if not q.is_zero():
                exps = [0] * len(self.sequence)
                exps[i] = 1
                terms[tuple(exps)] = Poly(self.ambient, q.terms)
        return PDElement(self.pd_algebra, terms), Poly(self.ambient, rem.terms)

    def lift(self, u: EnvelopeElement) -> PDElement:
        """sum a_K e_K back to the lifting pd-algebra, with the weight-0 part split over the y_i."""
        out = self.pd_algebra.zero()
        for K, a in u.parts.items():
            if any(K):
                J = tuple(k * self.p for k in K)
                out = out + PDElement(self.pd_algebra, {J: Poly(self.ambient, a.terms)})
            else:
                ideal_part, rem = self.split_ideal(a)
                out = out + ideal_part + self.pd_algebra.constant(rem)
        out.truncated = u.truncated
        return out

    def reduce_parts(self, pending: Dict[PDExps, Poly], truncated: bool = False) -> EnvelopeElement:
        result: Dict[PDExps, Poly] = {}
        while pending:
            level = min(sum(K) for K in pending)
            for K in sorted(k for k in pending if sum(k) == level):
                a = pending.pop(K)
                rem, quots, cut = self._divide(a)
                truncated = truncated or cut
                if not rem.is_zero():
                    result[K] = result[K] + rem if K in result else rem
                for i, q in enumerate(quots):
                    if q.is_zero():
                        continue
                    k = K[i]
                    factor = factorial((k + 1) * self.p) // factorial(k * self.p)
                    spill = q * factor
                    if spill.is_zero():
                        continue
                    K2 = tuple(x + (1 if j == i else 0) for j, x in enumerate(K))
                    if sum(K2) * self.p > self.weight_cap:
                        truncated = True
                        continue
                    pending[K2] = pending[K2] + spill if K2 in pending else spill
        return EnvelopeElement(self, result, truncated)

    def gamma_image(self, J: PDExps) -> Tuple[PDExps, Poly]:
        """γ_J(y) = (unit * prod f_i^{r_i}) e_K with J_i = K_i p + r_i."""
        modulus = self.work_ring.modulus
        coeff = self.work_ring.one()
        K = []
        for i, j in enumerate(J):
            k, r = divmod(j, self.p)
            K.append(k)
            denom = 1
            for t in range(k * self.p + 1, j + 1):
                denom *= t
            unit = pow(denom, -1, modulus)
            coeff = coeff * (self.sequence[i] ** r) * unit
        return tuple(K), coeff

    def normal_form(self, u: Any) -> EnvelopeElement:
        """Normal form of a pd-element (over A) or of a plain polynomial in A."""
        if isinstance(u, Poly):
            u = self.pd_algebra.constant(Poly(self.ambient, u.terms))
        if u.parent != self.pd_algebra:
            raise MixedParents("element does not live in this envelope's pd-algebra")
        pending: Dict[PDExps, Poly] = {}
        for J, c in u.terms.items():
            K, g = self.gamma_image(J)
            term = Poly(self.work_ring, c.terms) * g
            pending[K] = pending[K] + term if K in pending else term
        return self.reduce_parts(pending, u.truncated)

    def element(self, u: Any) -> EnvelopeElement:
        return self.normal_form(u)

    # structure

    @property
    def twist_rank(self) -> int:
        """dim_{F_p} of A/(f_1^p..f_r^p) inside the window."""
        return len({a for a, _ in self.window_basis})

    def normal_basis(self) -> List[Dict[str, Any]]:
        """The mod-p basis {prod f_i^{a_i} γ_{b_i p}(y_i) : 0 <= a_i < p} up to the cap."""
        if self.n != 1:
            raise NotModP("normal basis is stated mod p", context={"n": self.n})
        out = []
        Ks = sorted({K for _, K in self.window_basis}, key=lambda K: (sum(K), K))
        for K in Ks:
            for a in product(range(self.p), repeat=len(self.sequence)):
                out.append({"f_powers": list(a), "gamma": [k * self.p for k in K]})
        return out

    def normal_basis_vectors(self) -> List[List[int]]:
        vecs = []
        for entry in self.normal_basis():
            K = tuple(b // self.p for b in entry["gamma"])
            a = self.work_ring.one()
            for f, e in zip(self.sequence, entry["f_powers"]):
                a = a * f ** e
            vecs.append(self.reduce_parts({K: a}).vector())
        return vecs

    def _weight_generators(self, weight: int, conj_level: Optional[int] = None) -> List[List[int]]:
        alphas = sorted({a for a, _ in self.window_basis}, key=lambda a: (sum(a), a))
        vecs = []
        for J in self.pd_algebra.basis(weight):
            if conj_level is not None and sum(j // self.p for j in J) > conj_level:
                continue
            K, g = self.gamma_image(J)
            for alpha in alphas:
                a = Poly(self.work_ring, {alpha: 1}) * g
                vecs.append(self.reduce_parts({K: a}).vector())
        return vecs

    def weight_dimension(self, weight: int, conj_level: Optional[int] = None) -> int:
        """dim over F_p of the image of A·{γ_J : |J| <= weight} in D/p."""
        vecs = self._weight_generators(weight, conj_level)
        return rank_mod_p(vecs, len(self.window_basis), self.p, label="pd_weight")

    def weight_invariants(self, weight: int) -> List[int]:
        """Invariants e of the span over Z/p^n of the weight-filtered generators."""
        vecs = self._weight_generators(weight)
        hf = howell_form(vecs, len(self.window_basis), self.p, self.n)
        return sorted(self.n - _pivot_v(row[col], self.p, self.n) for col, row in hf)

    def is_flat(self) -> bool:
        """The representable window is free over Z/p^n."""
        inv = self.weight_invariants(self.weight_cap)
        return len(inv) == len(self.window_basis) and all(e == self.n for e in inv)

    def dimension_table(self) -> List[Dict[str, int]]:
        """Rows (weight, conjugate level, dim) for the mod-p image."""
        rows = []
        for w in range(self.weight_cap + 1):
            for i in range(w // self.p + 1):
                rows.append({"weight": w, "conj_level": i, "dim": self.weight_dimension(w, i)})
        return rows

    def reduce_mod_p(self) -> "PDEnvelope":
        ring = self.ambient.at_precision(1)
        return PDEnvelope(ring, [f.reduce_precision(1) for f in self.sequence],
                          self.weight_cap, self.pd_names, self.pd_cap)

    def to_json(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "n": self.n,
            "ambient": list(self.ambient.variables),
            "sequence": [f.to_json() for f in self.sequence],
            "weight_cap": self.weight_cap,
            "twist_rank": self.twist_rank,
            "window_rank": len(self.window_basis),
        }


def _pivot_v(x: int, p: int, n: int) -> int:
    v = 0
    x %= p ** n
    while x and x % p == 0:
        x //= p
        v += 1
    return v if x else n


def koszul_h1_dimension(ambient: PolyRing, sequence: Sequence[Poly], degree: int) -> int:
    """dim_{F_p} of truncated Koszul H_1 of the sequence mod p, in degrees <= degree."""
    p = ambient.p
    ring = ambient.at_precision(1).with_options(degree_cap=None)
    fs = [Poly(ring, f.terms) for f in sequence]
    r = len(fs)
    degs = [int(f.total_degree()) for f in fs]
    monos = ring.monomials_up_to(degree)
    mindex = {m: i for i, m in enumerate(monos)}

    def vec(poly: Poly) -> List[int]:
        out = [0] * len(monos)
        for e, c in poly.terms.items():
            out[mindex[e]] = c
        return out

    # C_1 basis: (i, monomial) with deg(monomial) + deg f_i <= degree
    c1 = [(i, m) for i in range(r) for m in ring.monomials_up_to(max(degree - degs[i], -1))]
    d1_cols = [vec(Poly(ring, {m: 1}) * fs[i]) for i, m in c1]
    d1_rows = [[col[k] for col in d1_cols] for k in range(len(monos))]
    rank_d1 = rank_mod_p(d1_rows, len(c1), p, label="koszul_d1")
    c1_index = {key: idx for idx, key in enumerate(c1)}
    d2_cols = []
    for i in range(r):
        for j in range(i + 1, r):
            for m in ring.monomials_up_to(max(degree - degs[i] - degs[j], -1)):
                col = [0] * len(c1)
                # d(e_i ^ e_j) = f_i e_j - f_j e_i
                for e, c in (Poly(ring, {m: 1}) * fs[i]).terms.items():
                    col[c1_index[(j, e)]] += c
                for e, c in (Poly(ring, {m: 1}) * fs[j]).terms.items():
                    col[c1_index[(i, e)]] -= c
                d2_cols.append(col)
    d2_rows = [[col[k] for col in d2_cols] for k in range(len(c1))]
    rank_d2 = rank_mod_p(d2_rows, len(d2_cols), p, label="koszul_d2") if d2_cols else 0
    return len(c1) - rank_d1 - rank_d2


@logged_operation(logger, summarize=lambda env: {"window_rank": len(env.window_basis)})
def pd_envelope(
    ambient: PolyRing,
    sequence: Sequence[Poly],
    weight_cap: int,
    n: Optional[int] = None,
    assume_regular: bool = False,
    pd_names: Optional[Sequence[str]] = None,
    pd_cap: Optional[int] = None,
) -> PDEnvelope:
    """Build the truncated envelope, checking regularity mod p unless asserted."""
    if n is not None and n != ambient.n:
        ambient = ambient.at_precision(n)
        sequence = [Poly(ambient, f.terms) for f in sequence]
    if not assume_regular:
        degree = sum(max(int(f.total_degree()), 0) for f in sequence) + 1
        h1 = koszul_h1_dimension(ambient, sequence, degree)
        if h1:
            raise NotRegularSequence("truncated Koszul H_1 mod p is nonzero",
                                     context={"h1": h1, "degree": degree})
    return PDEnvelope(ambient, sequence, weight_cap, pd_names, pd_cap)


def conjugate_filtration_pd(D: PDEnvelope, level: int) -> Dict[str, Any]:
    """Fil_i = span of (A-part)·prod γ_{k_j p}(y_j) with sum k_j <= i, and its graded piece."""
    if D.n != 1:
        raise NotModP("conjugate filtration is computed mod p", context={"n": D.n})
    if level * D.p > D.weight_cap:
        raise CapTooSmall("level exceeds the weight cap", context={"level": level, "cap": D.weight_cap})
    basis = [(a, K) for a, K in D.window_basis if sum(K) <= level]
    fil_dim = D.weight_dimension(D.weight_cap, level)
    prev_dim = D.weight_dimension(D.weight_cap, level - 1) if level > 0 else 0
    gr_dim = fil_dim - prev_dim
    rank = gr_dim // D.twist_rank if D.twist_rank else 0
    return {
        "level": level,
        "fil_basis": [{"alpha": list(a), "gamma": [k * D.p for k in K]} for a, K in basis],
        "fil_dim": fil_dim,
        "gr_dim": gr_dim,
        "twist_dim": D.twist_rank,
        "gr_rank": rank,
        "expected_rank": comb(level + len(D.sequence) - 1, len(D.sequence) - 1) if D.sequence else int(level == 0),
    }


def iterated_gamma_iso(r: int, p: int, cap: int) -> Dict[str, Any]:
    """x_i -> (γ_p ∘ ... ∘ γ_p)(x) from F_p[x_0..x_r]/(x_i^p) into F_p<x>."""
    check_prime(p)
    top = p ** (r + 1)
    if cap < top - 1:
        raise CapTooSmall("cap must be at least p^(r+1) - 1", context={"cap": cap, "needed": top - 1})
    scalars = PolyRing([], p, 1)
    A = PDAlgebra(scalars, ["x"], cap)
    images = [A.var("x")]
    for _ in range(r):
        images.append(gamma(p, images[-1]))
    columns = []
    for exps in product(range(p), repeat=r + 1):
        value = A.one()
        for img, e in zip(images, exps):
            for _ in range(e):
                value = value * img
        col = [0] * top
        for (j,), c in value.terms.items():
            if j < top:
                col[j] = int(c.constant_term())
        columns.append({"source": list(exps), "image": col})
    rows = [[c["image"][j] for c in columns] for j in range(top)]
    rank = rank_mod_p(rows, len(columns), p, label="iterated_gamma")
    return {
        "p": p,
        "r": r,
        "cap": cap,
        "generator_images": [repr(img) for img in images],
        "rank": rank,
        "bijective": rank == top == len(columns),
        "columns": columns,
    }


def is_eisenstein(E: Poly) -> bool:
    ring = E.ring
    if len(ring.variables) != 1:
        return False
    deg = int(E.total_degree())
    coeffs = [E.coefficient((e * ring.denom,)) for e in range(deg + 1)]
    if deg < 1 or coeffs[deg] != 1:
        return False
    if any(c % ring.p for c in coeffs[:-1]):
        return False
    if ring.n >= 2 and coeffs[0] % ring.p ** 2 == 0:
        return False
    return True


def faltings_breuil(p: int, n: int, E: Poly, cap: int) -> PDEnvelope:
    """Truncation of W[x]<E(x)>, the envelope of (E) in Z/p^n[x]; Hodge filtration by pd-weight."""
    if not is_eisenstein(E):
        raise NotEisenstein("E must be monic Eisenstein", context={"E": repr(E)})
    ring = E.ring.at_precision(n) if E.ring.n != n else E.ring
    E = Poly(ring, E.terms)
    return pd_envelope(ring, [E], cap, assume_regular=True, pd_names=["E"])


def residue_model(D: PDEnvelope) -> FiniteAlgebra:
    """O = Z/p^n[x]/(E) for a Faltings-Breuil envelope."""
    E = D.sequence[0]
    deg = D.degrees[0]
    coeffs = [E.coefficient((e,)) for e in range(deg + 1)]
    # use signed representatives so the Eisenstein shape stays visible
    signed = [c - D.work_ring.modulus if c > D.work_ring.modulus // 2 else c for c in coeffs[:-1]] + [1]
    return make_finite_algebra(D.p, D.n, [{"var": D.ambient.variables[0], "coeffs": signed}])


def evaluate_at_root(D: PDEnvelope, u: EnvelopeElement):
    """The map D -> O sending x to the root of E and every γ_j(E), j >= 1, to 0."""
    O = residue_model(D)
    x = O.gen(D.ambient.variables[0])
    value = O.zero()
    a = u.parts.get((0,) * len(D.sequence))
    if a is None:
        return value
    for (e,), c in a.terms.items():
        value = value + (x ** e) * c
    return value


def hodge_filtration(D: PDEnvelope, r: int) -> List[List[int]]:
    """Generators of Fil^r (A-multiples of γ_J(y), |J| >= r) in window coordinates."""
    return [vec for weight, vec in _hodge_generators(D) if weight >= r]


def _hodge_generators(D: PDEnvelope) -> List[Tuple[int, List[int]]]:
    alphas = sorted({a for a, _ in D.window_basis}, key=lambda a: (sum(a), a))
    out = []
    for J in D.pd_algebra.basis():
        K, g = D.gamma_image(J)
        if sum(K) * D.p > D.weight_cap:
            continue
        for alpha in alphas:
            out.append((sum(J), D.reduce_parts({K: Poly(D.work_ring, {alpha: 1}) * g}).vector()))
    return out


def hodge_level(D: PDEnvelope, u: EnvelopeElement) -> Optional[int]:
    """Largest r <= pd_cap with u in Fil^r, None for zero."""
    if u.is_zero():
        return None
    ncols = len(D.window_basis)
    generators = _hodge_generators(D)
    target = u.vector()
    level = 0
    for r in range(1, D.pd_cap + 1):
        fil = [vec for weight, vec in generators if weight >= r]
        if _length(fil + [target], ncols, D.p, D.n) != _length(fil, ncols, D.p, D.n):
            break
        level = r
    return level


def _length(vecs: List[List[int]], ncols: int, p: int, n: int) -> int:
    """Length of the Z/p^n-span of vecs."""
    return sum(n - _pivot_v(row[col], p, n) for col, row in howell_form(vecs, ncols, p, n))


def hodge_graded_structure(D: PDEnvelope, r: int = 1) -> Dict[str, Any]:
    """Structure of Fil^r/Fil^{r+1} over Z/p^n and whether E^r's class generates it over O."""
    ncols = len(D.window_basis)
    p, n = D.p, D.n
    fil_r = hodge_filtration(D, r)
    fil_next = hodge_filtration(D, r + 1)
    len_r = _length(fil_r, ncols, p, n)
    len_next = _length(fil_next, ncols, p, n)
    mod_p_denominator = _length(fil_next + [[(p * x) for x in v] for v in fil_r], ncols, p, n)
    gr_length = len_r - len_next
    gr_mod_p_dim = len_r - mod_p_denominator
    e = D.degrees[0]
    K, g = D.gamma_image((r,))
    generator = [D.reduce_parts({K: Poly(D.work_ring, {(a,): 1}) * g}).vector() for a in range(e)]
    generated = _length(fil_next + generator, ncols, p, n) == len_r
    return {
        "r": r,
        "gr_length": gr_length,
        "gr_mod_p_dim": gr_mod_p_dim,
        "free": gr_length == n * gr_mod_p_dim,
        "rank_over_O": gr_mod_p_dim // e if e else 0,
        "generated_by_gamma_r_E": generated,
    }
