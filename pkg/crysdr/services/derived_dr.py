"""
Derived de Rham cohomology of a principal quotient B = A/(f).

The resolution is the two-sided bar construction B(A, Z[t], Z) with Z[t]
acting on A through t -> f and on Z through t -> 0. Level s is the
polynomial ring A[t_1..t_s]; level 1 has faces t -> f and t -> 0.

Forms are relative to A. The bicomplex entry (s, i) is Ω^i of level s,
truncated by weight (A-variables weigh 1, t_k and dt_k weigh max(1, deg f)),
placed in total degree i - s with d_tot = d_v + (-1)^i Σ_j (-1)^j d_j^*.
"""

from dataclasses import dataclass
from itertools import combinations
from math import factorial
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from crysdr.core.config import settings
from crysdr.core.exceptions import (
    LiftNotFrobenius,
    NotACocycle,
    OutOfStableRange,
    VerificationFailure,
    WindowTooWide,
)
from crysdr.core.logging import ServiceLogger
from crysdr.services.derham import CochainComplex, cohomology, sort_wedge
from crysdr.services.pd import PDAlgebra, PDElement, PDEnvelope
from crysdr.services.poly import Poly, PolyRing, substitute
from crysdr.utils.linalg import kernel_mod_p, rank_mod_p, transpose
from crysdr.utils.time_utils import logged_operation

logger = ServiceLogger("derived_dr")

Wedge = Tuple[int, ...]
Label = Tuple[int, int, Tuple[int, ...], Wedge]


class BarResolution:
    """Simplicial resolution P_s = A[t_1..t_s] of A/(f)."""

    def __init__(self, A: PolyRing, f: Poly, s_max: int):
        if s_max < 0:
            raise ValueError("s_max must be non-negative")
        if f.ring != A:
            f = Poly(A, f.terms)
        self.A = A.with_options(degree_cap=None)
        self.f = Poly(self.A, f.terms)
        self.s_max = s_max
        self.p = A.p
        self.n = A.n
        self.t_weight = max(1, int(self.f.total_degree()))
        self.homogeneous = all(sum(e) == self.t_weight for e in self.f.terms)
        self._rings: Dict[int, PolyRing] = {}
        self._faces: Dict[Tuple[int, int], Dict[str, Poly]] = {}

    @staticmethod
    def t_names(s: int) -> List[str]:
        return [f"t{k}" for k in range(1, s + 1)]

    def level_ring(self, s: int) -> PolyRing:
        if s not in self._rings:
            self._rings[s] = PolyRing(list(self.A.variables) + self.t_names(s), self.p, self.n)
        return self._rings[s]

    def lift(self, g: Poly, s: int) -> Poly:
        """A -> P_s."""
        ring = self.level_ring(s)
        pad = (0,) * s
        return Poly(ring, {e + pad: c for e, c in g.terms.items()})

    def face(self, s: int, j: int) -> Dict[str, Poly]:
        """Images of t_1..t_s under d_j: P_s -> P_{s-1}."""
        if not 0 <= j <= s or s < 1:
            raise ValueError(f"no face d_{j} at level {s}")
        key = (s, j)
        if key not in self._faces:
            target = self.level_ring(s - 1)
            images: Dict[str, Poly] = {}
            for k in range(1, s + 1):
                name = f"t{k}"
                if j == 0:
                    images[name] = self.lift(self.f, s - 1) if k == 1 else target.gen(f"t{k - 1}")
                elif j == s:
                    images[name] = target.zero() if k == s else target.gen(name)
                elif k <= j:
                    images[name] = target.gen(name)
                elif k == j + 1:
                    images[name] = target.gen(f"t{j}")
                else:
                    images[name] = target.gen(f"t{k - 1}")
            self._faces[key] = images
        return self._faces[key]

    def degeneracy(self, s: int, j: int) -> Dict[str, Poly]:
        """Images of t_1..t_s under s_j: P_s -> P_{s+1} (inserts a unit factor)."""
        target = self.level_ring(s + 1)
        return {
            f"t{k}": target.gen(f"t{k}" if k <= j else f"t{k + 1}")
            for k in range(1, s + 1)
        }

    def apply_face(self, s: int, j: int, g: Poly) -> Poly:
        return substitute(g, self.face(s, j), target=self.level_ring(s - 1))

    def apply_degeneracy(self, s: int, j: int, g: Poly) -> Poly:
        return substitute(g, self.degeneracy(s, j), target=self.level_ring(s + 1))

    def _compose(self, s: int, maps: Sequence[Tuple[str, int]]) -> List[Poly]:
        """Images of the generators of P_s under a composite, applied left to right."""
        level = s
        values = [self.level_ring(s).gen(v) for v in self.level_ring(s).variables]
        for kind, j in maps:
            if kind == "d":
                values = [self.apply_face(level, j, v) for v in values]
                level -= 1
            else:
                values = [self.apply_degeneracy(level, j, v) for v in values]
                level += 1
        return values

    def check_simplicial_identities(self) -> bool:
        """Face and degeneracy identities on generators for all levels <= s_max."""
        for s in range(2, self.s_max + 1):
            for j in range(s + 1):
                for i in range(j):
                    if self._compose(s, [("d", j), ("d", i)]) != self._compose(s, [("d", i), ("d", j - 1)]):
                        return False
        for s in range(0, self.s_max):
            for j in range(s + 1):
                ident = self._compose(s, [])
                if self._compose(s, [("s", j), ("d", j)]) != ident:
                    return False
                if self._compose(s, [("s", j), ("d", j + 1)]) != ident:
                    return False
                for i in range(s + 2):
                    if i < j:
                        lhs = self._compose(s, [("s", j), ("d", i)])
                        rhs = self._compose(s, [("d", i), ("s", j - 1)]) if s >= 1 else lhs
                    elif i > j + 1:
                        lhs = self._compose(s, [("s", j), ("d", i)])
                        rhs = self._compose(s, [("d", i - 1), ("s", j)]) if s >= 1 else lhs
                    else:
                        continue
                    if lhs != rhs:
                        return False
        return True

    # weights

    def weight(self, exps: Tuple[int, ...], wedge: Wedge = ()) -> int:
        na = len(self.A.variables)
        return sum(exps[:na]) + self.t_weight * (sum(exps[na:]) + len(wedge))

    def monomials(self, s: int, max_weight: int) -> List[Tuple[int, ...]]:
        weights = [1] * len(self.A.variables) + [self.t_weight] * s
        out: List[Tuple[int, ...]] = []

        def rec(prefix: List[int], remaining: int, idx: int):
            if idx == len(weights):
                out.append(tuple(prefix))
                return
            for e in range(remaining // weights[idx] + 1):
                rec(prefix + [e], remaining - e * weights[idx], idx + 1)

        if max_weight >= 0:
            rec([], max_weight, 0)
        return sorted(out, key=lambda e: (self.weight(e), e))

    def moore_complex(self, deg_cap: int) -> CochainComplex:
        """Alternating-face complex of the underlying modules, in degrees -s."""
        bases = {-s: [(s, 0, e, ()) for e in self.monomials(s, deg_cap)] for s in range(self.s_max + 1)}
        diffs = {}
        modulus = self.p ** self.n
        for s in range(1, self.s_max + 1):
            index = {lab[2]: k for k, lab in enumerate(bases[-(s - 1)])}
            M = [[0] * len(bases[-s]) for _ in bases[-(s - 1)]]
            ring = self.level_ring(s)
            for col, (_, _, exps, _) in enumerate(bases[-s]):
                mono = Poly(ring, {exps: 1})
                for j in range(s + 1):
                    for e2, c in self.apply_face(s, j, mono).terms.items():
                        M[index[e2]][col] = (M[index[e2]][col] + (-1) ** j * c) % modulus
            diffs[-s] = M
        return CochainComplex(self.p, self.n, bases, diffs, name="moore")

    def homology_check(self, deg_cap: int) -> Dict[str, Any]:
        """H_0 of the Moore complex is B; H_s vanishes for 1 <= s < s_max."""
        C = self.moore_complex(deg_cap)
        if C.n != 1:
            C = C.reduce_mod_p()
        H = cohomology(C)
        quotient = quotient_dimension(self.A.at_precision(1), [self.f.reduce_precision(1)], deg_cap)
        middle = [H.dims.get(-s, 0) for s in range(1, self.s_max)]
        return {
            "h0": H.dims.get(0, 0),
            "expected_h0": quotient,
            "higher": middle,
            "passed": H.dims.get(0, 0) == quotient and not any(middle),
        }


@logged_operation(logger, summarize=lambda r: {"s_max": r.s_max})
def bar_resolution(A: PolyRing, f: Poly, s_max: int) -> BarResolution:
    return BarResolution(A, f, s_max)


def quotient_dimension(A: PolyRing, generators: Sequence[Poly], deg_cap: int) -> int:
    """dim_{F_p} of A/(generators) in weight <= deg_cap, by linear algebra on the truncation."""
    ring = A.with_options(degree_cap=None)
    monos = ring.monomials_up_to(deg_cap)
    index = {m: i for i, m in enumerate(monos)}
    rows = []
    for g in generators:
        g = Poly(ring, g.terms)
        for m in monos:
            prod = Poly(ring, {m: 1}) * g
            if any(e not in index for e in prod.terms):
                continue
            row = [0] * len(monos)
            for e, c in prod.terms.items():
                row[index[e]] = c
            rows.append(row)
    return len(monos) - (rank_mod_p(rows, len(monos), A.p, label="ideal") if rows else 0)


@dataclass
class BarBicomplex:
    """Relative de Rham bicomplex of a bar resolution, truncated by weight."""

    resolution: BarResolution
    deg_cap: int

    def basis(self, s: int, i: int) -> List[Label]:
        R = self.resolution
        if i < 0 or i > s or s > R.s_max or s < 0:
            return []
        out = []
        for w in combinations(range(s), i):
            for e in R.monomials(s, self.deg_cap - R.t_weight * i):
                out.append((s, i, e, w))
        return sorted(out, key=lambda lab: (R.weight(lab[2], lab[3]), lab[3], lab[2]))

    def vertical(self, label: Label) -> Dict[Label, int]:
        """Relative de Rham differential in the t-variables."""
        s, i, exps, w = label
        na = len(self.resolution.A.variables)
        out: Dict[Label, int] = {}
        for k in range(s):
            e = exps[na + k]
            if not e or k in w:
                continue
            below = sum(1 for g in w if g < k)
            sign = -1 if below % 2 else 1
            new_exps = tuple(x - 1 if idx == na + k else x for idx, x in enumerate(exps))
            key = (s, i + 1, new_exps, tuple(sorted(w + (k,))))
            out[key] = out.get(key, 0) + sign * e
        return out

    def horizontal(self, label: Label) -> Dict[Label, int]:
        """Σ_j (-1)^j d_j^* from level s to level s-1."""
        R = self.resolution
        s, i, exps, w = label
        out: Dict[Label, int] = {}
        if s == 0:
            return out
        mono = Poly(R.level_ring(s), {exps: 1})
        na = len(R.A.variables)
        for j in range(s + 1):
            images = R.face(s, j)
            new_w = []
            dead = False
            for k in w:
                img = images[f"t{k + 1}"]
                # d of the image, relative to A: only a bare t survives
                if img.is_monomial() and list(img.terms.values()) == [1]:
                    (e_img,) = img.terms.keys()
                    tpos = [q for q in range(na, len(e_img)) if e_img[q]]
                    if len(tpos) == 1 and sum(e_img) == 1:
                        new_w.append(tpos[0] - na)
                        continue
                dead = True
                break
            if dead:
                continue
            sign, sorted_w = sort_wedge(new_w)
            if sign == 0:
                continue
            for e2, c in R.apply_face(s, j, mono).terms.items():
                key = (s - 1, i, e2, sorted_w)
                out[key] = out.get(key, 0) + sign * (-1) ** j * c
        return out

    def d_total(self, label: Label) -> Dict[Label, int]:
        s, i, _, _ = label
        out = dict(self.vertical(label))
        sign = -1 if i % 2 else 1
        for key, c in self.horizontal(label).items():
            out[key] = out.get(key, 0) + sign * c
        return out


def totalize(
    BC: BarBicomplex,
    total_window: Tuple[int, int] = (-1, 1),
    deg_cap: Optional[int] = None,
    weight: Optional[int] = None,
) -> CochainComplex:
    """Total complex in degrees lo..hi of the truncated bicomplex.

    With ``weight`` set (homogeneous f only) just that weight summand is built.
    """
    if deg_cap is not None and deg_cap != BC.deg_cap:
        BC = BarBicomplex(BC.resolution, deg_cap)
    R = BC.resolution
    if weight is not None and not R.homogeneous:
        raise ValueError("weight summands need a homogeneous f")
    lo, hi = total_window
    bases: Dict[int, List[Label]] = {}
    for q in range(lo, hi + 1):
        labels: List[Label] = []
        for s in range(R.s_max + 1):
            labels.extend(lab for lab in BC.basis(s, q + s)
                          if weight is None or R.weight(lab[2], lab[3]) == weight)
        bases[q] = labels
    total = sum(len(b) for b in bases.values())
    if total > settings.MEMORY_GUARD:
        raise WindowTooWide(
            "truncated total complex exceeds the memory guard",
            context={"size": total, "limit": settings.MEMORY_GUARD},
        )
    modulus = R.p ** R.n
    diffs: Dict[int, List[List[int]]] = {}
    for q in range(lo, hi):
        index = {lab: k for k, lab in enumerate(bases[q + 1])}
        M = [[0] * len(bases[q]) for _ in bases[q + 1]]
        for col, lab in enumerate(bases[q]):
            for key, c in BC.d_total(lab).items():
                row = index.get(key)
                if row is None:
                    raise VerificationFailure("differential leaves the truncation", context={"label": repr(key)})
                M[row][col] = (M[row][col] + c) % modulus
        diffs[q] = M
    C = CochainComplex(R.p, R.n, bases, diffs, name="total")
    if not C.check_d_squared():
        raise VerificationFailure("d_tot^2 != 0 on the truncated total complex")
    logger.logger.debug("totalized", dimension=total, window=list(total_window))
    return C


def _boundaries(C: CochainComplex) -> List[List[int]]:
    return transpose(C.matrix(-1), C.dim(-1)) if C.dim(-1) else []


def _column_cycles(C: CochainComplex, level: int) -> List[List[int]]:
    """Degree-0 cocycles supported in columns <= level."""
    dim0 = C.dim(0)
    cols = [k for k, lab in enumerate(C.bases.get(0, [])) if lab[0] <= level]
    if not cols:
        return []
    if C.dim(1):
        sub = [[row[k] for k in cols] for row in C.matrix(0)]
        kernel = kernel_mod_p(sub, len(cols), C.p)
    else:
        kernel = [[1 if a == b else 0 for b in range(len(cols))] for a in range(len(cols))]
    out = []
    for vec in kernel:
        full = [0] * dim0
        for k, v in zip(cols, vec):
            full[k] = v
        out.append(full)
    return out


def _span_rank(vectors: List[List[int]], dim: int, p: int, label: str) -> int:
    return rank_mod_p(vectors, dim, p, label=label) if vectors else 0


def _column_filtration(C: CochainComplex, levels: int) -> List[int]:
    """dim Fil_i H^0 for i < levels, Fil_i = classes with cocycles in columns <= i."""
    dim0 = C.dim(0)
    if dim0 == 0:
        return [0] * levels
    boundaries = _boundaries(C)
    rank_b = _span_rank(boundaries, dim0, C.p, "boundaries")
    return [
        _span_rank(boundaries + _column_cycles(C, i), dim0, C.p, "fil") - rank_b
        for i in range(levels)
    ]


def _h0_filtration(R: BarResolution, deg_cap: int) -> List[int]:
    BC = BarBicomplex(R, deg_cap)
    levels = R.s_max + 1
    if not R.homogeneous:
        C = totalize(BC, (-1, 1))
        return _column_filtration(C if C.n == 1 else C.reduce_mod_p(), levels)
    totals = [0] * levels
    for wt in range(deg_cap + 1):
        C = totalize(BC, (-1, 1), weight=wt)
        for i, d in enumerate(_column_filtration(C if C.n == 1 else C.reduce_mod_p(), levels)):
            totals[i] += d
    return totals


@logged_operation(logger, summarize=lambda r: {"gr": r["gr"], "certified": r["certified"]})
def derived_dr_h0(A: PolyRing, f: Poly, s_max: int, deg_cap: int, certify: bool = True) -> Dict[str, Any]:
    """H^0 of the truncated totalization with its conjugate filtration by column support."""
    R = BarResolution(A, f, s_max)
    fil = _h0_filtration(R, deg_cap)
    gr = [fil[0]] + [fil[i] - fil[i - 1] for i in range(1, len(fil))]
    in_range = gr[:max(s_max, 1)]
    certified = [False] * len(in_range)
    if certify:
        R_next = BarResolution(A, f, s_max + 1)
        fil_next = _h0_filtration(R_next, deg_cap + A.p)
        gr_next = [fil_next[0]] + [fil_next[i] - fil_next[i - 1] for i in range(1, len(fil_next))]
        certified = [gr_next[i] == d for i, d in enumerate(in_range)]
    return {
        "p": A.p,
        "f": repr(f),
        "s_max": s_max,
        "deg_cap": deg_cap,
        "fil": fil,
        "gr": in_range,
        "h0": fil[-1],
        "certified": certified,
    }


def twist_dimension(A: PolyRing, f: Poly, deg_cap: int) -> int:
    """dim_{F_p} B^(1) = A/(f^p) in weight <= deg_cap."""
    A1 = A.at_precision(1).with_options(degree_cap=None)
    f1 = Poly(A1, f.terms)
    return quotient_dimension(A1, [f1 ** A.p], deg_cap)


def conjugate_e1(A: PolyRing, f: Poly, p_idx: int, q: int, s_max: int, deg_cap: int) -> int:
    """E_1 entry of the conjugate spectral sequence: Γ^{p_idx} of the rank-one twist module."""
    w = max(1, int(Poly(A, f.terms).total_degree()))
    if p_idx < 0 or p_idx >= max(s_max, 1) or (p_idx + 1) * A.p * w - 1 > deg_cap:
        raise OutOfStableRange(
            "entry lies outside the certified truncation",
            context={"p_idx": p_idx, "s_max": s_max, "deg_cap": deg_cap},
        )
    if p_idx + q != 0:
        return 0
    return twist_dimension(A, f, deg_cap)


# splitting and comparison

def generator_cocycle(R: BarResolution, k: int) -> Dict[int, Dict[Wedge, Poly]]:
    """γ_{p-1}(t_1)dt_1 ∧ ... ∧ γ_{p-1}(t_k)dt_k at level k; k = 0 gives the unit class."""
    ring = R.level_ring(k)
    if k == 0:
        return {0: {(): ring.one()}}
    p = R.p
    inv = pow(factorial(p - 1), -k, p ** R.n)
    na = len(R.A.variables)
    exps = tuple([0] * na + [p - 1] * k)
    return {k: {tuple(range(k)): Poly(ring, {exps: inv})}}


@logged_operation(logger, summarize=lambda r: {"cocycle": r["cocycle"], "generates_gr1": r["generates_gr1"]})
def liftable_cartier_split(p: int, f: Optional[Poly] = None, deg_cap: Optional[int] = None) -> Dict[str, Any]:
    """Degree-one splitting class (1/p)·d(g(t)) = t^{p-1}dt from the Frobenius lift g over Z/p^2."""
    A2 = PolyRing(["x"], p, 2) if f is None else f.ring.at_precision(2).with_options(degree_cap=None)
    f2 = A2.gen(A2.variables[0]) if f is None else Poly(A2, f.terms)
    R2 = BarResolution(A2, f2, 1)
    level1 = R2.level_ring(1)
    level0 = R2.level_ring(0)
    lift1 = {v: level1.gen(v) ** p for v in level1.variables}
    lift0 = {v: level0.gen(v) ** p for v in level0.variables}
    # the lift reduces to Frobenius on f and commutes with both faces
    if (substitute(f2, lift0, target=level0) - f2 ** p).reduce_precision(1).terms:
        raise LiftNotFrobenius("lift of f does not reduce to f^p", context={"f": repr(f2)})
    for j in range(2):
        lhs = R2.apply_face(1, j, lift1["t1"])
        rhs = substitute(R2.apply_face(1, j, level1.gen("t1")), lift0, target=level0)
        if lhs != rhs:
            raise LiftNotFrobenius("lift does not commute with the faces", context={"face": j})
    # d(t^p) = p t^{p-1} dt; divide by p and reduce
    na = len(A2.variables)
    d_coeff = {e[:na] + (e[na] - 1,): c * e[na] for e, c in lift1["t1"].terms.items() if e[na]}
    if any(c % p for c in d_coeff.values()):
        raise LiftNotFrobenius("d of the lifted t is not divisible by p")
    R1 = BarResolution(A2.at_precision(1), f2.reduce_precision(1), 2)
    rep = Poly(R1.level_ring(1), {e: (c // p) % p for e, c in d_coeff.items()})
    cap = deg_cap if deg_cap is not None else 2 * p * R1.t_weight - 1
    C = totalize(BarBicomplex(R1, cap), (-1, 1))
    index0 = {lab: k for k, lab in enumerate(C.bases[0])}

    def vector(g: Poly) -> List[int]:
        v = [0] * C.dim(0)
        for e, c in g.terms.items():
            key = (1, 1, e, (0,))
            if key in index0:
                v[index0[key]] = c
        return v

    cocycle = not any(C.apply(0, vector(rep)))
    # gr_1 is generated by the A-multiples of the class
    x = R1.lift(R1.A.gen(R1.A.variables[0]), 1)
    multiples = [vector(rep * x ** a) for a in range(p * R1.t_weight)]
    below = _boundaries(C) + _column_cycles(C, 0)
    r0 = _span_rank(below, C.dim(0), p, "fil0")
    r1 = _span_rank(below + multiples, C.dim(0), p, "fil0+class")
    fil = _column_filtration(C, 2)
    gr1 = fil[1] - fil[0]
    return {
        "p": p,
        "representative": "t1*dt1" if p == 2 else f"t1^{p - 1}*dt1",
        "coefficients": rep.to_json(),
        "cocycle": cocycle,
        "gr1_dim": gr1,
        "generates_gr1": gr1 > 0 and r1 - r0 == gr1,
        "normalized_generator": "gamma_{p-1}(t1)*dt1",
        "representative_over_normalized": factorial(p - 1) % p,
    }


class _PDForms:
    """Relative forms with divided-power coefficients at one level of the resolution."""

    def __init__(self, R: BarResolution, envelope: PDEnvelope):
        self.R = R
        self.envelope = envelope
        self.y = envelope.pd_names[0]
        self._algebras: Dict[int, PDAlgebra] = {}

    def algebra(self, s: int) -> PDAlgebra:
        if s not in self._algebras:
            if s == 0:
                self._algebras[s] = self.envelope.pd_algebra
            else:
                self._algebras[s] = PDAlgebra(self.envelope.ambient,
                                              list(self.envelope.pd_names) + BarResolution.t_names(s),
                                              self.envelope.weight_cap)
        return self._algebras[s]

    def from_poly(self, s: int, g: Poly) -> PDElement:
        """t^b = b!·γ_b(t); A-variables stay in the base."""
        P = self.algebra(s)
        na = len(self.R.A.variables)
        r = len(self.envelope.pd_names)
        out = P.zero()
        for e, c in g.terms.items():
            base = Poly(self.envelope.ambient, {e[:na]: c})
            mult = 1
            for b in e[na:]:
                mult *= factorial(b)
            out = out + PDElement(P, {(0,) * r + tuple(e[na:]): base * mult})
        return out

    def dv(self, s: int, form: Dict[Wedge, PDElement]) -> Dict[Wedge, PDElement]:
        """d(γ_J(t)) = Σ_k γ_{J-e_k}(t) dt_k; the pd variable of f is closed."""
        r = len(self.envelope.pd_names)
        P = self.algebra(s)
        out: Dict[Wedge, PDElement] = {}
        for w, u in form.items():
            for J, c in u.terms.items():
                for k in range(s):
                    if not J[r + k] or k in w:
                        continue
                    below = sum(1 for g in w if g < k)
                    sign = -1 if below % 2 else 1
                    J2 = tuple(x - 1 if idx == r + k else x for idx, x in enumerate(J))
                    w2 = tuple(sorted(w + (k,)))
                    term = PDElement(P, {J2: c * sign})
                    out[w2] = out[w2] + term if w2 in out else term
        return {w: u for w, u in out.items() if not u.is_zero()}

    def face(self, s: int, j: int, form: Dict[Wedge, PDElement]) -> Dict[Wedge, PDElement]:
        """Pullback along d_j: t -> t', t_1 -> f (the pd variable of f) or t -> 0."""
        r = len(self.envelope.pd_names)
        target = self.algebra(s - 1)
        images: List[Optional[int]] = []   # index in target pd variables, None for 0
        for k in range(1, s + 1):
            if j == 0:
                images.append(0 if k == 1 else r + k - 2)
            elif j == s:
                images.append(None if k == s else r + k - 1)
            elif k <= j:
                images.append(r + k - 1)
            elif k == j + 1:
                images.append(r + j - 1)
            else:
                images.append(r + k - 2)
        out: Dict[Wedge, PDElement] = {}
        for w, u in form.items():
            new_w = []
            dead = False
            for k in w:
                img = images[k]
                if img is None or img < r:
                    dead = True
                    break
                new_w.append(img - r)
            if dead:
                continue
            sign, sorted_w = sort_wedge(new_w)
            if sign == 0:
                continue
            value = target.zero()
            for J, c in u.terms.items():
                term = target.constant(c)
                for idx in range(r):
                    if J[idx]:
                        term = term * target.gamma_var(target.variables[idx], J[idx])
                alive = True
                for k in range(s):
                    e = J[r + k]
                    if not e:
                        continue
                    img = images[k]
                    if img is None:
                        alive = False
                        break
                    term = term * target.gamma_var(target.variables[img], e)
                if alive:
                    value = value + term
            value = value * sign
            if not value.is_zero():
                out[sorted_w] = out[sorted_w] + value if sorted_w in out else value
        return out

    def horizontal(self, s: int, form: Dict[Wedge, PDElement]) -> Dict[Wedge, PDElement]:
        out: Dict[Wedge, PDElement] = {}
        for j in range(s + 1):
            for w, u in self.face(s, j, form).items():
                term = u * ((-1) ** j)
                out[w] = out[w] + term if w in out else term
        return {w: u for w, u in out.items() if not u.is_zero()}

    def integrate(self, s: int, form: Dict[Wedge, PDElement]) -> Dict[Wedge, PDElement]:
        """Contracting homotopy of the pd de Rham complex in t_1..t_s."""
        r = len(self.envelope.pd_names)
        P = self.algebra(s)
        out: Dict[Wedge, PDElement] = {}
        for w, u in form.items():
            for J, c in u.terms.items():
                first = next((k for k in range(s) if J[r + k] or k in w), None)
                if first is None or first not in w:
                    continue
                J2 = tuple(x + 1 if idx == r + first else x for idx, x in enumerate(J))
                w2 = tuple(g for g in w if g != first)
                term = PDElement(P, {J2: c})
                out[w2] = out[w2] + term if w2 in out else term
        return {w: u for w, u in out.items() if not u.is_zero()}


def _subtract(a: Dict[Wedge, PDElement], b: Dict[Wedge, PDElement]) -> Dict[Wedge, PDElement]:
    out = dict(a)
    for w, u in b.items():
        out[w] = out[w] - u if w in out else -u
    return {w: u for w, u in out.items() if not u.is_zero()}


@logged_operation(logger, summarize=lambda u: {"terms": len(u.terms), "truncated": u.truncated})
def comp_to_crystalline(
    cocycle: Mapping[int, Mapping[Wedge, Poly]],
    envelope: PDEnvelope,
    resolution: Optional[BarResolution] = None,
) -> PDElement:
    """Image in D_A(f) of a total-degree-0 cocycle.

    Column by column from the top: adjoin divided powers, write the column as
    d_v(η) and replace it by minus the horizontal image of η.
    """
    R = resolution or BarResolution(envelope.ambient, envelope.sequence[0], max(cocycle, default=0))
    forms = _PDForms(R, envelope)
    for s, comp in cocycle.items():
        if any(len(w) != s for w in comp):
            raise NotACocycle("components must sit in total degree 0", context={"column": s})
    top = max(cocycle, default=0)
    columns: Dict[int, Dict[Wedge, PDElement]] = {
        s: {w: forms.from_poly(s, g) for w, g in cocycle.get(s, {}).items()} for s in range(top + 1)
    }
    columns = {s: {w: u for w, u in c.items() if not u.is_zero()} for s, c in columns.items()}
    # d_tot c = 0: column s+1 horizontal plus column s vertical, per column
    for s in range(top + 1):
        vert = forms.dv(s, columns[s])
        horiz = forms.horizontal(s + 1, columns[s + 1]) if s + 1 in columns else {}
        sign = -1 if (s + 1) % 2 else 1
        total = _subtract(vert, {w: u * (-sign) for w, u in horiz.items()})
        if total:
            raise NotACocycle("input is not a cocycle of the total complex", context={"column": s})
    for s in range(top, 0, -1):
        comp = columns[s]
        if not comp:
            continue
        eta = forms.integrate(s, comp)
        if _subtract(forms.dv(s, eta), comp):
            raise NotACocycle("column is not closed under the vertical differential", context={"column": s})
        sign = -1 if (s - 1) % 2 else 1
        push = forms.horizontal(s, eta)
        columns[s - 1] = _subtract(columns[s - 1], {w: u * sign for w, u in push.items()})
        columns[s] = {}
    result = columns[0].get((), envelope.pd_algebra.zero())
    return result
