"""Geometric structures declared by expressions.

Index conventions (fixed once for the whole package):

* ``X ⌟ ω`` has components ``sum_a X^a ω_ab``;
* ``dH ⌟ Π`` contracts the first slot: ``(dH ⌟ Π)^b = sum_a ∂_a H Π^ab``;
* the Poisson bracket is ``{f, g} = <df ∧ dg, Π> = sum_ab Π^ab ∂_a f ∂_b g``,
  so that ``X_H(G) = {H, G}``.

With these choices ``ω = dx∧dy`` and ``Π = ∂x∧∂y`` give the same
Hamiltonian field ``X = (-y, x)`` for ``H = (x² + y²)/2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .exprcore import (
    ZERO,
    Const,
    Expr,
    IrrationalBasis,
    DEFAULT_BASIS,
    add,
    compile_exprs,
    diff_expr,
    div,
    mul,
    neg,
    sub,
    variables,
)
from . import lattice


class InconsistentSystem(Exception):
    """-dH is not in the image of v -> v⌟ω: H is not a Hamiltonian function."""


class NotStructurePreserving(Exception):
    """The solved field violates X⌟dω = 0."""

    def __init__(self, message, field=None, residual=None):
        self.field = field
        self.residual = residual
        super().__init__(message)


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class VectorFieldExpr:
    components: tuple[Expr, ...]
    basis: IrrationalBasis = DEFAULT_BASIS

    @property
    def m(self) -> int:
        return len(self.components)

    @cached_property
    def func(self) -> Callable[[np.ndarray], np.ndarray]:
        return compile_exprs(self.components, self.basis)

    @cached_property
    def jacobian_func(self) -> Callable[[np.ndarray], np.ndarray]:
        """Returns DX with shape (m, m[, n]); entry [a, b] = ∂_b X^a."""
        m = self.m
        flat = [diff_expr(c, b) for c in self.components for b in range(m)]
        f = compile_exprs(flat, self.basis)

        def jac(x):
            v = f(x)
            return v.reshape((m, m) + v.shape[1:])

        return jac

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def __add__(self, other: "VectorFieldExpr") -> "VectorFieldExpr":
        return VectorFieldExpr(tuple(add(a, b) for a, b in zip(self.components, other.components)), self.basis.merge(other.basis))

    def scaled(self, c) -> "VectorFieldExpr":
        return VectorFieldExpr(tuple(mul(c if isinstance(c, Expr) else Const(Fraction(c)), a) for a in self.components), self.basis)

    def apply(self, f: Expr) -> Expr:
        """Directional derivative X(f)."""
        out: Expr = ZERO
        for a, xa in enumerate(self.components):
            out = add(out, mul(xa, diff_expr(f, a)))
        return out


class _Antisymmetric:
    """Shared storage for antisymmetric matrices of expressions (a < b kept)."""

    def __init__(self, m: int, entries: dict[tuple[int, int], Expr], basis: IrrationalBasis = DEFAULT_BASIS):
        self.m = m
        self.basis = basis
        ent: dict[tuple[int, int], Expr] = {}
        for (a, b), e in entries.items():
            if a == b:
                raise ValueError("diagonal entries of an antisymmetric matrix must vanish")
            if not (0 <= a < m and 0 <= b < m):
                raise ValueError("index out of range")
            if a < b:
                ent[(a, b)] = e
            else:
                ent[(b, a)] = neg(e)
        self.entries = {k: v for k, v in ent.items() if v != ZERO}

    def __getitem__(self, ab: tuple[int, int]) -> Expr:
        a, b = ab
        if a == b:
            return ZERO
        if a < b:
            return self.entries.get((a, b), ZERO)
        return neg(self.entries.get((b, a), ZERO))

    def matrix(self) -> list[list[Expr]]:
        return [[self[a, b] for b in range(self.m)] for a in range(self.m)]

    @cached_property
    def func(self):
        """Numeric matrix, shape (m, m[, n])."""
        m = self.m
        f = compile_exprs([self[a, b] for a in range(m) for b in range(m)], self.basis)

        def mat(x):
            v = f(np.asarray(x, dtype=float))
            return v.reshape((m, m) + v.shape[1:])

        return mat

    def is_constant(self) -> bool:
        return all(not variables(e) for e in self.entries.values())

    def exact_matrix(self) -> list[list[Fraction]] | None:
        """Rational matrix when every entry is a rational constant."""
        out = []
        for row in self.matrix():
            r = []
            for e in row:
                if not isinstance(e, Const):
                    return None
                r.append(e.value)
            out.append(r)
        return out

    def __eq__(self, other):
        return type(self) is type(other) and self.m == other.m and self.entries == other.entries

    def __hash__(self):
        return hash((type(self).__name__, self.m, tuple(sorted(self.entries.items(), key=lambda t: t[0]))))


class Structure2Form(_Antisymmetric):
    """Differential 2-form ω = sum_{a<b} ω_ab dx_a ∧ dx_b (not necessarily closed or nondegenerate)."""

    def d(self) -> dict[tuple[int, int, int], Expr]:
        """Exterior derivative: components (dω)_abc for a < b < c."""
        out = {}
        for a, b, c in itertools.combinations(range(self.m), 3):
            e = add(add(diff_expr(self[b, c], a), diff_expr(self[c, a], b)), diff_expr(self[a, b], c))
            if e != ZERO:
                out[(a, b, c)] = e
        return out

    def as_tensor(self) -> "TensorField":
        comps = np.empty((self.m, self.m), dtype=object)
        for a in range(self.m):
            for b in range(self.m):
                comps[a, b] = self[a, b]
        return TensorField(0, 2, comps, self.basis)


class PoissonBivector(_Antisymmetric):
    """Bivector Π = sum_{a<b} Π^ab ∂_a ∧ ∂_b; Jacobi checked on demand."""

    def as_tensor(self) -> "TensorField":
        comps = np.empty((self.m, self.m), dtype=object)
        for a in range(self.m):
            for b in range(self.m):
                comps[a, b] = self[a, b]
        return TensorField(2, 0, comps, self.basis)


@dataclass(frozen=True, eq=False)
class TensorField:
    """Tensor with ``h`` upper and ``k`` lower indices (upper first)."""

    h: int
    k: int
    components: np.ndarray  # object array of Expr, shape (m,)*(h+k)
    basis: IrrationalBasis = DEFAULT_BASIS

    def __post_init__(self):
        if self.h < 0 or self.k < 0:
            raise ValueError("tensor orders must be >= 0")
        comps = np.asarray(self.components, dtype=object)
        if comps.ndim != self.h + self.k or len(set(comps.shape)) > 1:
            raise ValueError("component array must have shape (m,)*(h+k)")
        object.__setattr__(self, "components", comps)

    @property
    def m(self) -> int:
        return self.components.shape[0] if self.components.ndim else 0

    @cached_property
    def func(self):
        """Numeric components, shape (m,)*(h+k) [+ (n,)]."""
        shape = self.components.shape
        flat = list(self.components.reshape(-1))
        f = compile_exprs(flat, self.basis) if flat else None

        def ev(x):
            v = f(np.asarray(x, dtype=float))
            return v.reshape(shape + v.shape[1:])

        return ev

    @classmethod
    def scalar(cls, e: Expr, basis=DEFAULT_BASIS) -> "TensorField":
        arr = np.empty((), dtype=object)
        arr[()] = e
        return cls(0, 0, arr, basis)

    @classmethod
    def vector(cls, X: VectorFieldExpr) -> "TensorField":
        return cls(1, 0, np.array(X.components, dtype=object), X.basis)

    @classmethod
    def covector(cls, comps: Sequence[Expr], basis=DEFAULT_BASIS) -> "TensorField":
        return cls(0, 1, np.array(list(comps), dtype=object), basis)

    @classmethod
    def differential(cls, f: Expr, m: int, basis=DEFAULT_BASIS) -> "TensorField":
        return cls.covector([diff_expr(f, a) for a in range(m)], basis)

    def tensor(self, other: "TensorField") -> "TensorField":
        """Tensor product; indices are reordered so all upper ones come first."""
        a, b = self.components, other.components
        out = np.empty(a.shape + b.shape, dtype=object)
        for ia in np.ndindex(*a.shape):
            for ib in np.ndindex(*b.shape):
                out[ia + ib] = mul(a[ia], b[ib])
        # move other's upper indices in front of self's lower ones
        na = self.h + self.k
        order = list(range(self.h)) + [na + i for i in range(other.h)] + [self.h + i for i in range(self.k)] + [na + other.h + i for i in range(other.k)]
        return TensorField(self.h + other.h, self.k + other.k, out.transpose(order), self.basis.merge(other.basis))

    def scaled(self, f: Expr) -> "TensorField":
        out = np.empty(self.components.shape, dtype=object)
        for idx in np.ndindex(*self.components.shape):
            out[idx] = mul(f, self.components[idx])
        return TensorField(self.h, self.k, out, self.basis)

    def __add__(self, other: "TensorField") -> "TensorField":
        out = np.empty(self.components.shape, dtype=object)
        for idx in np.ndindex(*self.components.shape):
            out[idx] = add(self.components[idx], other.components[idx])
        return TensorField(self.h, self.k, out, self.basis.merge(other.basis))


# ---------------------------------------------------------------------------
# Sampling helpers


def sample_points(m: int, n: int = 100, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    """Deterministic random points in [-scale, scale]^m, shape (n, m)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=(n, m))


def numerically_zero(exprs: Sequence[Expr], m: int, basis=DEFAULT_BASIS, tol: float = 1e-10, points=None) -> float:
    """Max |e(x)| over sample points; structural zeros short-circuit."""
    live = [e for e in exprs if e != ZERO]
    if not live:
        return 0.0
    pts = sample_points(m, 64, seed=12345) if points is None else np.asarray(points)
    vals = compile_exprs(live, basis)(pts.T)
    vals = vals[:, np.all(np.isfinite(vals), axis=0)]
    return float(np.max(np.abs(vals))) if vals.size else 0.0


# ---------------------------------------------------------------------------
# Hamiltonian vector fields


@dataclass
class HamiltonianSolve:
    """Result of solving X⌟ω = -dH."""

    field: VectorFieldExpr | "PointwiseField"
    kernel_dim: int
    symbolic: bool

    @property
    def kernel_ambiguity(self) -> bool:
        return self.kernel_dim > 0


class PointwiseField:
    """Minimum-norm numeric solution of X⌟ω = -dH, evaluated pointwise.

    Used for degenerate 2-forms with non-constant coefficients, where no
    closed-form solve is attempted.
    """

    def __init__(self, omega: Structure2Form, H: Expr, rcond: float = 1e-12, tol: float = 1e-10, basis=None):
        self.omega = omega
        self.H = H
        self.rcond = rcond
        self.tol = tol
        self.m = omega.m
        self._grad = compile_exprs([diff_expr(H, a) for a in range(self.m)], omega.basis if basis is None else basis)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self._solve(x)
        return np.stack([self._solve(x[:, j]) for j in range(x.shape[1])], axis=1)

    func = property(lambda self: self.__call__)

    def _solve(self, x):
        W = self.omega.func(x)
        rhs = -self._grad(x)
        # X⌟ω = W^T X
        sol, *_ = np.linalg.lstsq(W.T, rhs, rcond=self.rcond)
        res = np.max(np.abs(W.T @ sol - rhs)) if rhs.size else 0.0
        if res > self.tol * max(1.0, np.max(np.abs(rhs))):
            raise InconsistentSystem(f"-dH is not in the image of ω at {x.tolist()} (residual {res:.3e})")
        return sol


def _exact_pinv(A: list[list[Fraction]]) -> list[list[Fraction]]:
    """Moore-Penrose inverse of a rational matrix via full-rank factorization."""
    n = len(A)
    r, piv = lattice.rref(A)
    if not r:
        return [[Fraction(0)] * n for _ in range(n)]
    C = r  # k x n
    B = [[A[i][c] for c in piv] for i in range(n)]  # n x k

    def matmul(X, Y):
        return [[sum((X[i][t] * Y[t][j] for t in range(len(Y))), Fraction(0)) for j in range(len(Y[0]))] for i in range(len(X))]

    def T(X):
        return [list(col) for col in zip(*X)]

    def inv(X):
        size = len(X)
        aug = [list(X[i]) + [Fraction(int(i == j)) for j in range(size)] for i in range(size)]
        red, _ = lattice.rref(aug)
        return [row[size:] for row in red]

    CCt_inv = inv(matmul(C, T(C)))
    BtB_inv = inv(matmul(T(B), B))
    return matmul(matmul(matmul(T(C), CCt_inv), BtB_inv), T(B))


def _det_expr(M: list[list[Expr]]) -> Expr:
    n = len(M)
    if n == 1:
        return M[0][0]
    out: Expr = ZERO
    for j in range(n):
        if M[0][j] == ZERO:
            continue
        minor = [row[:j] + row[j + 1 :] for row in M[1:]]
        term = mul(M[0][j], _det_expr(minor))
        out = add(out, term) if j % 2 == 0 else sub(out, term)
    return out


def hamiltonian_vf_2form(
    omega: Structure2Form,
    H: Expr,
    check_structure: bool = True,
    rcond: float = 1e-12,
    basis: IrrationalBasis | None = None,
) -> HamiltonianSolve:
    """Solve X⌟ω = -dH.

    Constant ω: exact rational minimum-norm solve, with the consistency of
    -dH checked against ker ω. Nondegenerate non-constant ω: Cramer's rule
    on expressions. Otherwise a pointwise numeric minimum-norm field.
    Afterwards X⌟dω = 0 is checked numerically (``NotStructurePreserving``).
    """
    m = omega.m
    dH = [diff_expr(H, a) for a in range(m)]
    basis = omega.basis if basis is None else basis
    exact = omega.exact_matrix()
    kernel_dim = 0
    if exact is not None:
        WT = [list(col) for col in zip(*exact)]  # X⌟ω = W^T X
        kernel = lattice.nullspace_q(exact)  # ω v = 0 <=> v in ker of the contraction's transpose
        kernel_dim = len(kernel)
        for v in kernel:
            comb: Expr = ZERO
            for a, va in enumerate(v):
                if va != 0:
                    comb = add(comb, mul(Const(va), dH[a]))
            if numerically_zero([comb], m, basis) > 1e-10:
                raise InconsistentSystem("-dH has a component along ker ω; H is not a Hamiltonian function")
        P = _exact_pinv(WT)
        comps = []
        for a in range(m):
            e: Expr = ZERO
            for b in range(m):
                if P[a][b] != 0:
                    e = sub(e, mul(Const(P[a][b]), dH[b]))
            comps.append(e)
        X: VectorFieldExpr | PointwiseField = VectorFieldExpr(tuple(comps), basis)
        symbolic = True
    else:
        W = omega.matrix()
        det = _det_expr(W)
        pts = sample_points(m, 32, seed=7)
        dv = np.abs(compile_exprs([det], basis)(pts.T))
        if det != ZERO and np.all(dv[np.isfinite(dv)] > 1e-9):
            WT = [list(col) for col in zip(*W)]
            comps = []
            for a in range(m):
                # Cramer: replace column a of W^T by -dH
                Ma = [[(neg(dH[i]) if j == a else WT[i][j]) for j in range(m)] for i in range(m)]
                comps.append(div(_det_expr(Ma), det))
            X = VectorFieldExpr(tuple(comps), basis)
            symbolic = True
        else:
            X = PointwiseField(omega, H, rcond=rcond, basis=basis)
            for x in sample_points(m, 8, seed=3):
                X(x)  # raises InconsistentSystem early
            kernel_dim = m - int(np.linalg.matrix_rank(omega.func(sample_points(m, 1, seed=3)[0]), tol=rcond))
            symbolic = False
    if check_structure:
        res = structure_defect(omega, X)
        if res > 1e-9:
            raise NotStructurePreserving(f"X⌟dω = {res:.3e} != 0", field=X, residual=res)
    return HamiltonianSolve(X, kernel_dim, symbolic)


def structure_defect(omega: Structure2Form, X, points=None) -> float:
    """max |X⌟dω| over sample points."""
    dw = omega.d()
    if not dw:
        return 0.0
    m = omega.m
    pts = sample_points(m, 32, seed=11) if points is None else points
    full = {}
    for (a, b, c), e in dw.items():
        for perm, sgn in (((a, b, c), 1), ((b, c, a), 1), ((c, a, b), 1), ((b, a, c), -1), ((a, c, b), -1), ((c, b, a), -1)):
            full[perm] = (e, sgn)
    keys = sorted(full)
    f = compile_exprs([full[k][0] for k in keys], omega.basis)
    worst = 0.0
    for x in pts:
        vals = f(x)
        xv = np.asarray(X(x))
        out = np.zeros((m, m))
        for (a, b, c), v in zip(keys, vals):
            out[b, c] += full[(a, b, c)][1] * xv[a] * v
        worst = max(worst, float(np.max(np.abs(out))))
    return worst


def hamiltonian_vf_poisson(pi: PoissonBivector, H: Expr, basis: IrrationalBasis | None = None) -> VectorFieldExpr:
    """X = dH⌟Π, i.e. X^b = sum_a ∂_a H Π^ab."""
    m = pi.m
    dH = [diff_expr(H, a) for a in range(m)]
    comps = []
    for b in range(m):
        e: Expr = ZERO
        for a in range(m):
            pab = pi[a, b]
            if pab != ZERO and dH[a] != ZERO:
                e = add(e, mul(dH[a], pab))
        comps.append(e)
    return VectorFieldExpr(tuple(comps), pi.basis if basis is None else basis)


def bracket(A: Expr, B: Expr, structure) -> Expr:
    """{A, B} = X_A(B) for either kind of structure."""
    if isinstance(structure, PoissonBivector):
        m = structure.m
        dA = [diff_expr(A, a) for a in range(m)]
        dB = [diff_expr(B, a) for a in range(m)]
        out: Expr = ZERO
        for (a, b), p in structure.entries.items():
            # antisymmetric pair (a<b): Π^ab (∂_a A ∂_b B - ∂_b A ∂_a B)
            t = sub(mul(dA[a], dB[b]), mul(dA[b], dB[a]))
            if t != ZERO:
                out = add(out, mul(p, t))
        return out
    if isinstance(structure, Structure2Form):
        XA = hamiltonian_vf_2form(structure, A, check_structure=False)
        hamiltonian_vf_2form(structure, B, check_structure=False)
        if not XA.symbolic:
            raise TypeError("bracket needs a symbolic Hamiltonian field; ω is degenerate and non-constant")
        return XA.field.apply(B)
    raise TypeError("structure must be a Structure2Form or a PoissonBivector")


def lie_derivative(X: VectorFieldExpr, G: TensorField) -> TensorField:
    """Coordinate Lie derivative of a tensor field (upper indices first)."""
    m = X.m
    comps = G.components
    h, k = G.h, G.k
    dX = [[diff_expr(X.components[a], c) for c in range(m)] for a in range(m)]  # dX[a][c] = ∂_c X^a
    out = np.empty(comps.shape, dtype=object)
    for idx in np.ndindex(*comps.shape):
        e = X.apply(comps[idx])
        for pos in range(h):
            a = idx[pos]
            for c in range(m):
                if dX[a][c] == ZERO:
                    continue
                j = idx[:pos] + (c,) + idx[pos + 1 :]
                if comps[j] != ZERO:
                    e = sub(e, mul(dX[a][c], comps[j]))
        for pos in range(h, h + k):
            b = idx[pos]
            for c in range(m):
                if dX[c][b] == ZERO:
                    continue
                j = idx[:pos] + (c,) + idx[pos + 1 :]
                if comps[j] != ZERO:
                    e = add(e, mul(dX[c][b], comps[j]))
        out[idx] = e
    return TensorField(h, k, out, G.basis.merge(X.basis))


def jacobiator(pi: PoissonBivector) -> dict[tuple[int, int, int], Expr]:
    """J^abc = sum_d (Π^da ∂_d Π^bc + Π^db ∂_d Π^ca + Π^dc ∂_d Π^ab), a<b<c."""
    m = pi.m
    out = {}
    for a, b, c in itertools.combinations(range(m), 3):
        e: Expr = ZERO
        for d in range(m):
            for (u, v, w) in ((a, b, c), (b, c, a), (c, a, b)):
                pdu = pi[d, u]
                if pdu == ZERO:
                    continue
                dd = diff_expr(pi[v, w], d)
                if dd != ZERO:
                    e = add(e, mul(pdu, dd))
        out[(a, b, c)] = e
    return out


def check_jacobi(pi: PoissonBivector, sample_points_: np.ndarray) -> float:
    """Max |Jacobiator| over points and coordinate triples (pass: <= 1e-10)."""
    J = jacobiator(pi)
    live = [e for e in J.values() if e != ZERO]
    if not live:
        return 0.0
    vals = compile_exprs(live, pi.basis)(np.asarray(sample_points_, dtype=float).T)
    return float(np.max(np.abs(vals)))
