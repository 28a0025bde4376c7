"""
Exact linear algebra.

Over F_p everything goes through ``galois`` field arrays on top of numpy.
Over Z/p^n (a chain ring, so not a field) rows are brought into Howell
form, which gives canonical submodules and canonical reduction of vectors
modulo a submodule.
"""

from functools import lru_cache
from typing import List, Sequence, Tuple

import galois
import numpy as np

from crysdr.core.logging import performance_logger

Matrix = List[List[int]]


@lru_cache(maxsize=32)
def prime_field(p: int):
    """Field class GF(p); constructing it is expensive so it is cached."""
    return galois.GF(p)


def _as_field(rows: Sequence[Sequence[int]], ncols: int, p: int):
    GF = prime_field(p)
    arr = np.zeros((len(rows), ncols), dtype=np.int64)
    for i, row in enumerate(rows):
        for j, value in enumerate(row):
            arr[i, j] = value % p
    return GF(arr)


def rank_mod_p(rows: Sequence[Sequence[int]], ncols: int, p: int, label: str = "") -> int:
    """Rank of an integer matrix reduced mod p."""
    if not rows or ncols == 0:
        return 0
    A = _as_field(rows, ncols, p)
    rank = int(np.linalg.matrix_rank(A))
    performance_logger.log_matrix(label or "rank", len(rows), ncols, rank=rank)
    return rank


def pivot_columns(rows: Sequence[Sequence[int]], ncols: int, p: int) -> List[int]:
    """Pivot columns of the reduced row echelon form mod p."""
    if not rows or ncols == 0:
        return []
    R = _as_field(rows, ncols, p).row_reduce()
    pivots = []
    for i in range(R.shape[0]):
        nonzero = np.flatnonzero(R[i, :])
        if nonzero.size == 0:
            break
        pivots.append(int(nonzero[0]))
    return pivots


def kernel_mod_p(rows: Sequence[Sequence[int]], ncols: int, p: int) -> Matrix:
    """Basis of {v : M v = 0} over F_p, for M given by rows."""
    if ncols == 0:
        return []
    if not rows:
        return [[1 if i == j else 0 for j in range(ncols)] for i in range(ncols)]
    N = _as_field(rows, ncols, p).null_space()
    return [[int(x) for x in N[i, :]] for i in range(N.shape[0])]


def transpose(rows: Sequence[Sequence[int]], ncols: int) -> Matrix:
    return [[rows[i][j] for i in range(len(rows))] for j in range(ncols)]


def complement_basis(
    span: Sequence[Sequence[int]],
    candidates: Sequence[Sequence[int]],
    dim: int,
    p: int,
) -> List[int]:
    """Indices of candidates that extend a basis of span(span) inside F_p^dim.

    The candidates picked are independent modulo the span, and together with
    it they span span(span) + span(candidates).
    """
    if not candidates:
        return []
    columns = list(span) + list(candidates)
    pivots = pivot_columns(transpose(columns, dim), len(columns), p)
    offset = len(span)
    return [c - offset for c in pivots if c >= offset]


def solve_mod_p(
    rows: Sequence[Sequence[int]],
    ncols: int,
    target: Sequence[int],
    p: int,
):
    """Some v with M v = target over F_p, or None when target is not in the image."""
    if ncols == 0:
        return [] if all(t % p == 0 for t in target) else None
    augmented = [list(r) + [t] for r, t in zip(rows, target)]
    R = _as_field(augmented, ncols + 1, p).row_reduce()
    solution = [0] * ncols
    for i in range(R.shape[0]):
        nonzero = np.flatnonzero(R[i, :])
        if nonzero.size == 0:
            continue
        lead = int(nonzero[0])
        if lead == ncols:
            return None
        solution[lead] = int(R[i, ncols])
    return solution


def matmul_mod(a: Matrix, b: Matrix, modulus: int) -> Matrix:
    """Product of integer matrices mod an arbitrary modulus (Python ints, no overflow)."""
    if not a or not b:
        inner = len(b[0]) if b else 0
        return [[0] * inner for _ in a]
    ncols = len(b[0])
    result = []
    for row in a:
        out = [0] * ncols
        for k, coeff in enumerate(row):
            if coeff:
                brow = b[k]
                for j in range(ncols):
                    if brow[j]:
                        out[j] += coeff * brow[j]
        result.append([x % modulus for x in out])
    return result


# Z/p^n: Howell form

def _valuation(x: int, p: int, n: int) -> int:
    x %= p ** n
    if x == 0:
        return n
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def howell_form(rows: Sequence[Sequence[int]], ncols: int, p: int, n: int) -> List[Tuple[int, List[int]]]:
    """Howell form of the row span over Z/p^n.

    Returns (pivot column, row) pairs with pivot entries equal to p^v and all
    entries above a pivot reduced into [0, p^v). Two generating sets span the
    same submodule exactly when their Howell forms are equal.
    """
    modulus = p ** n
    work = [[x % modulus for x in r] for r in rows]
    work = [r for r in work if any(r)]
    basis: List[Tuple[int, List[int]]] = []
    col = 0
    while work and col < ncols:
        # pick the row with minimal valuation in this column
        best, best_v = None, n
        for idx, r in enumerate(work):
            v = _valuation(r[col], p, n)
            if v < best_v:
                best, best_v = idx, v
        if best is None:
            col += 1
            continue
        pivot_row = work.pop(best)
        unit = pivot_row[col] // p ** best_v
        inv = pow(unit, -1, modulus)
        pivot_row = [(x * inv) % modulus for x in pivot_row]
        scale = p ** best_v
        remaining = []
        for r in work:
            if r[col]:
                factor = r[col] // scale
                r = [(a - factor * b) % modulus for a, b in zip(r, pivot_row)]
            if any(r):
                remaining.append(r)
        # annihilator multiple keeps the span closed under the Howell property
        if best_v > 0:
            extra = [(x * p ** (n - best_v)) % modulus for x in pivot_row]
            if any(extra):
                remaining.append(extra)
        work = remaining
        basis.append((col, pivot_row))
        col += 1
    # reduce above pivots
    for i in range(len(basis)):
        col_i, row_i = basis[i]
        scale = row_i[col_i]
        for j in range(i):
            col_j, row_j = basis[j]
            q = row_j[col_i] // scale
            if q:
                basis[j] = (col_j, [(a - q * b) % modulus for a, b in zip(row_j, row_i)])
    performance_logger.log_matrix("howell", len(rows), ncols, rank=len(basis), p=p, n=n)
    return basis


def howell_reduce(vector: Sequence[int], basis: List[Tuple[int, List[int]]], p: int, n: int) -> List[int]:
    """Canonical representative of vector modulo the span of a Howell basis."""
    modulus = p ** n
    out = [x % modulus for x in vector]
    for col, row in basis:
        scale = row[col]
        q = out[col] // scale
        if q:
            out = [(a - q * b) % modulus for a, b in zip(out, row)]
    return out


def quotient_invariants(basis: List[Tuple[int, List[int]]], ncols: int, p: int, n: int) -> List[int]:
    """Exponents e with quotient (Z/p^n)^ncols / span = ⊕ Z/p^e (zeros omitted)."""
    pivots = {col: _valuation(row[col], p, n) for col, row in basis}
    exps = []
    for c in range(ncols):
        e = pivots.get(c, n)
        if e:
            exps.append(e)
    return exps
