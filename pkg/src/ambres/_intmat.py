"""Exact integer-matrix helpers: determinants, inverses, sublattice basis completion.

Everything here works on Python ints (lists of lists), so results are exact at any
magnitude; callers that need the 64-bit contract check ranges on conversion.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import DegenerateModel


def int_det(rows: list[list[int]]) -> int:
    """Exact determinant by fraction-free (Bareiss) elimination."""
    a = [list(map(int, r)) for r in rows]
    n = len(a)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def int_inverse(rows: list[list[int]]) -> list[list[int]]:
    """Exact inverse of a unimodular integer matrix (raises if not unimodular)."""
    n = len(rows)
    aug = [[Fraction(rows[i][j]) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)]
           for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise DegenerateModel("matrix is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            v = aug[i][j + n]
            if v.denominator != 1:
                raise DegenerateModel("matrix is not unimodular")
            row.append(int(v))
        out.append(row)
    return out


def sublattice_basis(rows: list[list[int]]) -> list[list[int]]:
    """Basis (as rows) of the integer lattice generated by the given row vectors."""
    a = [[int(x) for x in r] for r in rows]
    m = len(a)
    ncol = len(a[0]) if a else 0
    rank = 0
    for col in range(ncol):
        if rank == m:
            break
        piv = None
        for i in range(rank, m):
            if a[i][col] != 0 and (piv is None or abs(a[i][col]) < abs(a[piv][col])):
                piv = i
        if piv is None:
            continue
        a[rank], a[piv] = a[piv], a[rank]
        while True:
            done = True
            for i in range(rank + 1, m):
                if a[i][col] != 0:
                    q = a[i][col] // a[rank][col]
                    if q:
                        a[i] = [x - q * y for x, y in zip(a[i], a[rank])]
                    if a[i][col] != 0:
                        a[rank], a[i] = a[i], a[rank]
                        done = False
            if done:
                break
        rank += 1
    return [row for row in a[:rank] if any(row)]


def complete_basis(columns: list[list[int]]) -> tuple[list[list[int]], list[list[int]]]:
    """Extend primitive sublattice basis vectors to a basis of Z^p.

    ``columns`` holds p0 integer vectors of length p spanning a primitive rank-p0
    sublattice. Returns (T, Tinv) where T is p x p unimodular, its LAST p0 columns
    span the same sublattice, and Tinv is its exact inverse.

    Method: row-reduce the p x p0 matrix B to Hermite-like form V @ B = [D; 0] with V
    unimodular, tracking V. Primitivity requires |det D| = 1; then the last p0 columns
    of V^-1 equal B up to a unimodular column mix, and the first p - p0 columns of
    V^-1 complete the basis.
    """
    p = len(columns[0])
    p0 = len(columns)
    b = [[int(columns[j][i]) for j in range(p0)] for i in range(p)]  # p x p0
    v = [[int(i == j) for j in range(p)] for i in range(p)]

    row = 0
    for col in range(p0):
        piv = None
        for r in range(row, p):
            if b[r][col] != 0 and (piv is None or abs(b[r][col]) < abs(b[piv][col])):
                piv = r
        if piv is None:
            raise DegenerateModel("sublattice basis vectors are linearly dependent")
        b[row], b[piv] = b[piv], b[row]
        v[row], v[piv] = v[piv], v[row]
        # Euclidean-style elimination below the pivot row.
        while True:
            done = True
            for r in range(row + 1, p):
                if b[r][col] != 0:
                    q = b[r][col] // b[row][col]
                    if q != 0:
                        b[r] = [x - q * y for x, y in zip(b[r], b[row])]
                        v[r] = [x - q * y for x, y in zip(v[r], v[row])]
                    if b[r][col] != 0:
                        b[row], b[r] = b[r], b[row]
                        v[row], v[r] = v[r], v[row]
                        done = False
            if done:
                break
        row += 1

    det_d = 1
    for i in range(p0):
        det_d *= b[i][i]
    if abs(det_d) != 1:
        raise DegenerateModel("sublattice is not primitive (index > 1 in its saturation)")

    vinv = int_inverse(v)
    # V^-1 column i equals B @ D^-1-mix for i < p0; the remaining columns complete Z^p.
    first = [[vinv[r][c] for c in range(p0, p)] for r in range(p)]
    t = [[first[r][c] for c in range(p - p0)] + [int(columns[j][r]) for j in range(p0)]
         for r in range(p)]
    if abs(int_det(t)) != 1:
        raise DegenerateModel("basis completion failed")
    tinv = int_inverse(t)
    return t, tinv
