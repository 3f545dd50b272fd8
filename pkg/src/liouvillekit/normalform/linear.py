"""Exact Jordan-Chevalley splitting of a matrix over a declared number field.

Eigenvalue candidates come from high-precision roots of the square-free
part of the characteristic polynomial, identified as field elements by an
integer-relation search, and are only accepted after exact verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Sequence

import mpmath

from .field import NumberField, Scalar, identify

Matrix = list[list[Scalar]]


class FieldTooSmall(ArithmeticError):
    """The characteristic polynomial does not split over the declared field."""

    def __init__(self, message: str, factor: list[Scalar]):
        self.factor = factor
        super().__init__(message)


# matrices ----------------------------------------------------------------------


def as_matrix(K: NumberField, rows) -> Matrix:
    return [[K(v) for v in row] for row in rows]


def identity(K: NumberField, n: int) -> Matrix:
    return [[K.one if i == j else K.zero for j in range(n)] for i in range(n)]


def matmul(A: Matrix, B: Matrix) -> Matrix:
    K0 = A[0][0].field.zero
    out = []
    for row in A:
        new = []
        for j in range(len(B[0])):
            acc = K0
            for a, brow in zip(row, B):
                if a and brow[j]:
                    acc = acc + a * brow[j]
            new.append(acc)
        out.append(new)
    return out


def matsub(A: Matrix, B: Matrix) -> Matrix:
    return [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def transpose(A: Matrix) -> Matrix:
    return [list(r) for r in zip(*A)]


def is_zero_matrix(A: Matrix) -> bool:
    return all(v.is_zero() for row in A for v in row)


def rref(rows: Matrix) -> tuple[Matrix, list[int]]:
    A = [list(r) for r in rows]
    if not A:
        return [], []
    nr, nc = len(A), len(A[0])
    piv = []
    r = 0
    for c in range(nc):
        p = next((i for i in range(r, nr) if A[i][c]), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        inv = A[r][c].inverse()
        A[r] = [v * inv for v in A[r]]
        for i in range(nr):
            if i != r and A[i][c]:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        piv.append(c)
        r += 1
        if r == nr:
            break
    return A[:r], piv


def nullspace(A: Matrix) -> list[list[Scalar]]:
    """Basis of {v : A v = 0}; each vector has a 1 at its free column."""
    K = A[0][0].field
    n = len(A[0])
    red, piv = rref(A)
    out = []
    for f in (c for c in range(n) if c not in piv):
        v = [K.zero] * n
        v[f] = K.one
        for row, pc in zip(red, piv):
            v[pc] = -row[f]
        out.append(v)
    return out


def inverse(A: Matrix) -> Matrix:
    K = A[0][0].field
    n = len(A)
    aug = [list(row) + [K.one if i == j else K.zero for j in range(n)] for i, row in enumerate(A)]
    red, piv = rref(aug)
    if piv[:n] != list(range(n)):
        raise ZeroDivisionError("matrix is singular")
    return [row[n:] for row in red]


# polynomials (coefficient lists, lowest degree first) ---------------------------


def charpoly(A: Matrix) -> list[Scalar]:
    """Faddeev-LeVerrier: coefficients c_0..c_n of det(t I - A), c_n = 1."""
    K = A[0][0].field
    n = len(A)
    c = [K.zero] * (n + 1)
    c[n] = K.one
    M = [[K.zero] * n for _ in range(n)]
    for k in range(1, n + 1):
        AM = matmul(A, M)
        M = [[AM[i][j] + (c[n - k + 1] if i == j else K.zero) for j in range(n)] for i in range(n)]
        AM = matmul(A, M)
        tr = K.zero
        for i in range(n):
            tr = tr + AM[i][i]
        c[n - k] = tr * (-1) / k
    return c


def _trim(p: list[Scalar]) -> list[Scalar]:
    p = list(p)
    while len(p) > 1 and p[-1].is_zero():
        p.pop()
    return p


def poly_divmod(a: list[Scalar], b: list[Scalar]) -> tuple[list[Scalar], list[Scalar]]:
    a, b = _trim(a), _trim(b)
    K = b[0].field
    if len(a) < len(b):
        return [K.zero], a
    inv = b[-1].inverse()
    r = list(a)
    q = [K.zero] * (len(a) - len(b) + 1)
    for i in range(len(a) - len(b), -1, -1):
        coef = r[i + len(b) - 1] * inv
        q[i] = coef
        if coef:
            for j, bj in enumerate(b):
                r[i + j] = r[i + j] - coef * bj
    return q, _trim(r[: len(b) - 1] or [K.zero])


def poly_gcd(a, b):
    a, b = _trim(a), _trim(b)
    while not (len(b) == 1 and b[0].is_zero()):
        _, r = poly_divmod(a, b)
        a, b = b, r
    inv = a[-1].inverse()
    return [v * inv for v in a]


def poly_deriv(p):
    return [v * i for i, v in enumerate(p)][1:] or [p[0].field.zero]


def poly_eval(p, x: Scalar) -> Scalar:
    acc = x.field.zero
    for c in reversed(p):
        acc = acc * x + c
    return acc


def poly_str(p) -> str:
    return " + ".join(f"({c})*t^{i}" for i, c in enumerate(p) if c) or "0"


# splitting -------------------------------------------------------------------


def exact_eigenvalues(A: Matrix) -> list[tuple[Scalar, int]]:
    """Distinct eigenvalues with algebraic multiplicity, or FieldTooSmall."""
    K = A[0][0].field
    P = charpoly(A)
    g = poly_gcd(P, poly_deriv(P)) if len(P) > 2 else [K.one]
    sqf, _ = poly_divmod(P, g)
    found: list[Scalar] = []
    if len(sqf) > 1:
        coeffs = [c.mp() for c in reversed(sqf)]
        with mpmath.workdps(80):
            roots = mpmath.polyroots(coeffs, maxsteps=400, extraprec=200) if len(coeffs) > 2 else [-coeffs[1] / coeffs[0]]
        for z in roots:
            cand = identify(K, z)
            if cand is not None and poly_eval(sqf, cand).is_zero() and cand not in found:
                found.append(cand)
    rest = P
    out = []
    for lam in found:
        mult = 0
        lin = [-lam, K.one]
        while True:
            q, r = poly_divmod(rest, lin)
            if not (len(r) == 1 and r[0].is_zero()):
                break
            rest, mult = q, mult + 1
        out.append((lam, mult))
    if len(_trim(rest)) > 1:
        raise FieldTooSmall(f"characteristic polynomial has a factor irreducible over {K}: {poly_str(rest)}", rest)
    return out


def _sort_key(lam: Scalar):
    z = lam.mp()
    return (float(mpmath.re(z)), float(mpmath.im(z)), tuple(lam.c))


@dataclass
class LinearPart:
    A: Matrix
    S: Matrix
    N: Matrix
    eigenvalues: list[Scalar]  # one per column of P
    P: Matrix  # columns span generalized eigenspaces
    P_inv: Matrix
    charpoly: list[Scalar]
    multiplicities: dict = dc_field(default_factory=dict)

    @property
    def field(self) -> NumberField:
        return self.A[0][0].field

    @property
    def diagonalizable(self) -> bool:
        return is_zero_matrix(self.N)

    @property
    def N_eigen(self) -> Matrix:
        """Nilpotent part in eigen-coordinates (block diagonal)."""
        return matmul(matmul(self.P_inv, self.N), self.P)


def split_linear(A) -> LinearPart:
    """Exact S + N with S diagonalizable, N nilpotent and SN = NS."""
    A = [list(r) for r in A]
    K = A[0][0].field
    n = len(A)
    eig = exact_eigenvalues(A)
    cols: list[tuple[list[Scalar], Scalar]] = []
    for lam, mult in sorted(eig, key=lambda e: _sort_key(e[0])):
        B = [[A[i][j] - (lam if i == j else K.zero) for j in range(n)] for i in range(n)]
        Bk = B
        for _ in range(mult - 1):
            Bk = matmul(Bk, B)
        basis = nullspace(Bk)
        if len(basis) != mult:
            raise ArithmeticError("generalized eigenspace dimension mismatch")
        cols.extend((v, lam) for v in basis)
    # keep the identity when A is already in eigen-coordinates
    def lead(v):
        return next(i for i, x in enumerate(v) if x)

    cols.sort(key=lambda c: lead(c[0]))
    P = [[cols[j][0][i] for j in range(n)] for i in range(n)]
    gam = [c[1] for c in cols]
    Pinv = inverse(P)
    D = [[gam[i] if i == j else K.zero for j in range(n)] for i in range(n)]
    S = matmul(matmul(P, D), Pinv)
    N = matsub(A, S)
    return LinearPart(A, S, N, gam, P, Pinv, charpoly(A), {str(l): m for l, m in eig})


def is_nilpotent(N: Matrix) -> bool:
    M = N
    for _ in range(len(N)):
        M = matmul(M, N)
    return is_zero_matrix(M)


def matrix_str(A: Matrix) -> list[list[str]]:
    return [[str(v) for v in row] for row in A]


def parse_matrix(K: NumberField, rows: Sequence[Sequence]) -> Matrix:
    return as_matrix(K, rows)
