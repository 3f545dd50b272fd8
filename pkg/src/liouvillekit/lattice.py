"""Exact rational/integer linear algebra and small real-lattice utilities.

Row conventions throughout: a matrix is a list of rows, and lattices are
generated by rows.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

Matrix = list[list[Fraction]]


def to_fractions(rows) -> Matrix:
    return [[Fraction(v) for v in row] for row in rows]


def rref(rows) -> tuple[Matrix, list[int]]:
    """Reduced row echelon form over Q. Returns (nonzero rows, pivot columns)."""
    a = to_fractions(rows)
    if not a:
        return [], []
    n = len(a[0])
    pivots: list[int] = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(a)) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [v * inv for v in a[r]]
        for i in range(len(a)):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [vi - f * vr for vi, vr in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == len(a):
            break
    return a[:r], pivots


def rank_q(rows) -> int:
    return len(rref(rows)[0])


def nullspace_q(rows, n: int | None = None) -> Matrix:
    """Basis of {w : A w = 0} over Q (as rows)."""
    if not rows:
        if n is None:
            raise ValueError("column count needed for an empty matrix")
        return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    n = len(rows[0])
    r, pivots = rref(rows)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        w = [Fraction(0)] * n
        w[f] = Fraction(1)
        for i, pc in enumerate(pivots):
            w[pc] = -r[i][f]
        basis.append(w)
    return basis


def clear_denominators(vec: Sequence[Fraction]) -> list[int]:
    """Smallest primitive integer vector positively proportional to ``vec``."""
    from math import gcd, lcm

    den = 1
    for v in vec:
        den = lcm(den, Fraction(v).denominator)
    ints = [int(Fraction(v) * den) for v in vec]
    g = 0
    for v in ints:
        g = gcd(g, v)
    return [v // g for v in ints] if g else ints


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def hnf_with_transform(rows: Sequence[Sequence[int]]) -> tuple[list[list[int]], list[list[int]]]:
    """Row-style Hermite normal form H = U A with U unimodular.

    Returns (H, U) where H keeps all rows (zero rows last).
    """
    a = [list(map(int, r)) for r in rows]
    k = len(a)
    if k == 0:
        return [], []
    n = len(a[0])
    u = [[int(i == j) for j in range(k)] for i in range(k)]
    r = 0
    for c in range(n):
        if r == k:
            break
        # gcd-combine all rows below r into row r for column c
        for i in range(r + 1, k):
            if a[i][c] == 0:
                continue
            if a[r][c] == 0:
                a[r], a[i] = a[i], a[r]
                u[r], u[i] = u[i], u[r]
                continue
            g, s, t = _xgcd(a[r][c], a[i][c])
            p, q = a[r][c] // g, a[i][c] // g
            ar, ai = a[r], a[i]
            a[r] = [s * x + t * y for x, y in zip(ar, ai)]
            a[i] = [-q * x + p * y for x, y in zip(ar, ai)]
            ur, ui = u[r], u[i]
            u[r] = [s * x + t * y for x, y in zip(ur, ui)]
            u[i] = [-q * x + p * y for x, y in zip(ur, ui)]
        if a[r][c] == 0:
            continue
        if a[r][c] < 0:
            a[r] = [-x for x in a[r]]
            u[r] = [-x for x in u[r]]
        piv = a[r][c]
        for i in range(r):
            f = a[i][c] // piv
            if f:
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
                u[i] = [x - f * y for x, y in zip(u[i], u[r])]
        r += 1
    return a, u


def hnf(rows: Sequence[Sequence[int]]) -> list[list[int]]:
    """Nonzero rows of the Hermite normal form of the row lattice."""
    h, _ = hnf_with_transform(rows)
    return [row for row in h if any(row)]


def integer_left_kernel(rows: Sequence[Sequence]) -> list[list[int]]:
    """HNF basis of {k in Z^len(rows) : sum_i k_i rows[i] = 0}.

    ``rows`` may hold rationals; they are scaled to integers column-wise
    first (scaling does not change the kernel).
    """
    from math import lcm

    if not rows:
        return []
    fr = to_fractions(rows)
    ncol = len(fr[0])
    ints = [[0] * ncol for _ in fr]
    for c in range(ncol):
        den = 1
        for r in fr:
            den = lcm(den, r[c].denominator)
        for i, r in enumerate(fr):
            ints[i][c] = int(r[c] * den)
    h, u = hnf_with_transform(ints)
    kernel = [u[i] for i, row in enumerate(h) if not any(row)]
    return hnf(kernel) if kernel else []


def saturated_basis(rows: Sequence[Sequence]) -> list[list[int]]:
    """HNF basis of span_Q(rows) intersected with Z^n."""
    fr = to_fractions(rows)
    if not fr or rank_q(fr) == 0:
        return []
    n = len(fr[0])
    comp = nullspace_q(fr)
    if not comp:
        return [[int(i == j) for j in range(n)] for i in range(n)]
    # v in the span  <=>  v . w = 0 for every w orthogonal to the rows
    cols = [[w[i] for w in comp] for i in range(n)]
    return integer_left_kernel(cols)


def solve_q(a_rows, b: Sequence) -> list[Fraction] | None:
    """One exact solution x of x . A = b (x combines the rows of A), or None."""
    a = to_fractions(a_rows)
    k = len(a)
    n = len(a[0])
    # transpose system: A^T x = b
    aug = [[a[i][c] for i in range(k)] + [Fraction(b[c])] for c in range(n)]
    r, piv = rref(aug)
    if k in piv:
        return None
    x = [Fraction(0)] * k
    for i, pc in enumerate(piv):
        x[pc] = r[i][k]
    return x


def det_int(rows: Sequence[Sequence[int]]) -> Fraction:
    r = to_fractions(rows)
    n = len(r)
    det = Fraction(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if r[i][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            r[c], r[piv] = r[piv], r[c]
            det = -det
        det *= r[c][c]
        for i in range(c + 1, n):
            f = r[i][c] / r[c][c]
            if f:
                r[i] = [x - f * y for x, y in zip(r[i], r[c])]
    return det


# ---------------------------------------------------------------------------
# Real lattices (period lattices in flow-time coordinates)


def pairwise_reduce(basis: np.ndarray, max_rounds: int = 100) -> np.ndarray:
    """Greedy pairwise size reduction (Lagrange-Gauss generalized).

    Each vector is shortened by integer multiples of the others until no
    pair improves. Rows are then ordered by dominant coordinate and norm and
    signs fixed so the dominant coordinate is positive.
    """
    b = np.array(basis, dtype=float)
    p = b.shape[0]
    for _ in range(max_rounds):
        changed = False
        for i in range(p):
            for j in range(p):
                if i == j:
                    continue
                nj = b[j] @ b[j]
                k = np.rint((b[i] @ b[j]) / nj)
                if k != 0:
                    cand = b[i] - k * b[j]
                    if cand @ cand < b[i] @ b[i] * (1 - 1e-12):
                        b[i] = cand
                        changed = True
        if not changed:
            break
    return canonical_order(b)


def canonical_order(b: np.ndarray) -> np.ndarray:
    b = np.array(b, dtype=float)
    rows = []
    for v in b:
        k = int(np.argmax(np.abs(v) * (1 + 1e-9 * np.arange(len(v))[::-1])))
        if v[k] < 0:
            v = -v
        rows.append((k, float(np.linalg.norm(v)), v))
    rows.sort(key=lambda t: (t[0], t[1]))
    return np.array([r[2] for r in rows])


def lattice_from_generators(vectors: np.ndarray, p: int, max_den: int = 64, tol: float = 1e-6) -> np.ndarray:
    """Basis of the lattice generated by real ``vectors`` (rows) of rank ``p``.

    Rational coordinates relative to a provisional basis are recovered with
    denominators up to ``max_den``; the integer lattice they generate is put
    in Hermite form and mapped back.
    """
    vecs = np.array(vectors, dtype=float)
    # provisional basis: greedily pick the shortest independent vectors
    order = np.argsort(np.linalg.norm(vecs, axis=1), kind="stable")
    chosen: list[np.ndarray] = []
    for idx in order:
        cand = chosen + [vecs[idx]]
        if np.linalg.matrix_rank(np.array(cand), tol=tol * max(1.0, np.abs(vecs).max())) == len(cand):
            chosen.append(vecs[idx])
        if len(chosen) == p:
            break
    if len(chosen) < p:
        raise ValueError("generators do not span a full-rank lattice")
    base = np.array(chosen)
    coords = vecs @ np.linalg.inv(base)
    fr_rows = []
    for row in coords:
        fr = [Fraction(float(c)).limit_denominator(max_den) for c in row]
        if max(abs(float(f) - c) for f, c in zip(fr, row)) > tol:
            raise ValueError("generator is not commensurate with the provisional basis")
        fr_rows.append(fr)
    from math import lcm

    den = 1
    for row in fr_rows:
        for f in row:
            den = lcm(den, f.denominator)
    ints = [[int(f * den) for f in row] for row in fr_rows]
    h = np.array(hnf(ints), dtype=float) / den
    return h @ base
