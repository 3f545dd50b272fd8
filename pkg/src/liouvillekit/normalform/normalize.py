"""Poincaré-Dulac and Birkhoff normalization by exact Lie transforms.

Both modes first move to eigen-coordinates of the linear part, then remove
non-resonant terms degree by degree with generators W_r applied as
``exp(ad W_r)`` truncated at the target degree. The generator log plus the
linear change of coordinates replays the whole transformation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import mpmath

from .field import NumberField, Scalar
from .linear import LinearPart, inverse, matmul, split_linear, transpose
from .series import (
    FormalSeries,
    poisson,
    vf_add,
    vf_bracket,
    vf_homogeneous,
    vf_is_zero,
    vf_scale,
    vf_substitute_linear,
    vf_to_text,
)

MODES = ("vectorfield", "hamiltonian")


class NilpotentObstruction(UserWarning):
    """The linear part has a nonzero nilpotent component."""


class NormalFormError(ValueError):
    pass


@dataclass
class GeneratorStep:
    degree: int
    generator: object  # FormalSeries (hamiltonian) or list[FormalSeries]

    def to_dict(self) -> dict:
        if isinstance(self.generator, FormalSeries):
            text = self.generator.to_text()
        else:
            text = vf_to_text(self.generator)
        return {"degree": self.degree, "generator": text}


@dataclass
class NormalizeResult:
    mode: str
    maxdeg: int
    gamma: list[Scalar]  # eigenvalues (vector-field) or frequencies λ_j (hamiltonian)
    P: list[list[Scalar]]  # old coordinates = P @ eigen-coordinates
    P_inv: list[list[Scalar]]
    transformed: object  # input in eigen-coordinates, before the Lie transforms
    normalized: object  # normal form in eigen-coordinates
    log: list[GeneratorStep]
    semisimple: object  # X^ss (vector-field list) or quadratic H_2 in eigen-coordinates
    flags: list[str] = dc_field(default_factory=list)

    def commutator(self):
        """[X_norm, X^ss] (vector fields) or {H_norm, H_2}; zero when normalized."""
        if self.mode == "hamiltonian":
            return poisson(self.normalized, self.semisimple)
        return vf_bracket(self.normalized, self.semisimple)

    def commutator_is_zero(self) -> bool:
        c = self.commutator()
        return c.is_zero() if isinstance(c, FormalSeries) else vf_is_zero(c)

    def in_original_frame(self):
        """Normal form expressed through the inverse linear change (same coordinate names as the input)."""
        if self.mode == "hamiltonian":
            return self.normalized.substitute_linear(self.P_inv)
        return vf_substitute_linear(self.normalized, self.P_inv, self.P)

    def to_text(self) -> str:
        if self.mode == "hamiltonian":
            return self.normalized.to_text()
        return vf_to_text(self.normalized)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "maxdeg": self.maxdeg,
            "gamma": [str(g) for g in self.gamma],
            "P": [[str(v) for v in row] for row in self.P],
            "generators": [s.to_dict() for s in self.log],
            "flags": list(self.flags),
            "commutator_zero": self.commutator_is_zero(),
            "terms": len(self.normalized) if isinstance(self.normalized, FormalSeries) else sum(len(c) for c in self.normalized),
        }


# Lie transforms -----------------------------------------------------------------


def lie_transform_vf(W: Sequence[FormalSeries], X: Sequence[FormalSeries]) -> list[FormalSeries]:
    """exp(ad W) X with ad W (Y) = [W, Y], truncated at X's degree."""
    out = list(X)
    term = list(X)
    n = 1
    while True:
        term = vf_scale(vf_bracket(W, term), X[0].field(1) / n)
        if vf_is_zero(term):
            return out
        out = vf_add(out, term)
        n += 1


def lie_transform_h(chi: FormalSeries, H: FormalSeries) -> FormalSeries:
    """exp(ad χ) H with ad χ (F) = {χ, F}, truncated at H's degree."""
    out = H
    term = H
    n = 1
    while True:
        term = poisson(chi, term).scale(H.field(1) / n)
        if term.is_zero():
            return out
        out = out + term
        n += 1


# linear parts --------------------------------------------------------------------


def linear_matrix(X: Sequence[FormalSeries]) -> list[list[Scalar]]:
    """A[i][j] = coefficient of z_j in X^i."""
    m = len(X)
    return [[X[i][tuple(int(a == j) for a in range(m))] for j in range(m)] for i in range(m)]


def linear_field(A: Sequence[Sequence[Scalar]], N: int, K: NumberField) -> list[FormalSeries]:
    m = len(A)
    return [FormalSeries(m, N, K, {tuple(int(a == j) for a in range(m)): A[i][j] for j in range(m)}) for i in range(m)]


def hessian(H: FormalSeries) -> list[list[Scalar]]:
    m = H.m
    out = [[H.field.zero] * m for _ in range(m)]
    for k, c in H.homogeneous(2).terms.items():
        idx = [a for a in range(m) for _ in range(k[a])]
        a, b = idx
        if a == b:
            out[a][a] = c * 2
        else:
            out[a][b] = c
            out[b][a] = c
    return out


def structure_matrix(K: NumberField, n: int) -> list[list[Scalar]]:
    """Canonical Π with Π[x_i][y_i] = 1."""
    m = 2 * n
    out = [[K.zero] * m for _ in range(m)]
    for i in range(n):
        out[i][n + i] = K.one
        out[n + i][i] = -K.one
    return out


# vector-field mode -----------------------------------------------------------------


def _split_nonresonant(V: list[FormalSeries], gamma: list[Scalar]) -> tuple[list[FormalSeries], dict]:
    """Resonant part and non-resonant parts grouped by μ = γ_j - <γ,k>."""
    m = len(V)
    res = [v._new({}) for v in V]
    groups: dict[tuple, tuple[Scalar, list[dict]]] = {}
    for j, comp in enumerate(V):
        for k, c in comp.terms.items():
            mu = gamma[j]
            for a, e in enumerate(k):
                if e:
                    mu = mu - gamma[a] * e
            if mu.is_zero():
                res[j].terms[k] = c
            else:
                key = mu.c
                if key not in groups:
                    groups[key] = (mu, [dict() for _ in range(m)])
                groups[key][1][j][k] = c
    return res, groups


def _homological_vf(groups: dict, V: list[FormalSeries], Nfield: list[FormalSeries] | None) -> list[FormalSeries]:
    """W with ([W, S] + [W, N]) = -(non-resonant part), exact on each μ-block."""
    m = len(V)
    tmpl = V[0]._new({})
    W = [tmpl._new({}) for _ in range(m)]
    for key in sorted(groups):
        mu, parts = groups[key]
        c = [tmpl._new(dict(p)) for p in parts]
        inv = mu.inverse()
        # T = mu (1 + T_N / mu); T^{-1} c = sum_n (-1)^n T_N^n c / mu^{n+1}
        term = vf_scale(c, inv)
        acc = term
        if Nfield is not None:
            sign = -1
            while True:
                term = vf_scale(vf_bracket(term, Nfield), inv)
                if vf_is_zero(term):
                    break
                acc = vf_add(acc, vf_scale(term, sign))
                sign = -sign
        W = vf_add(W, vf_scale(acc, -1))
    return W


def _normalize_vf(X: Sequence[FormalSeries], maxdeg: int) -> NormalizeResult:
    K = X[0].field
    m = len(X)
    X = [x.truncate(maxdeg) for x in X]
    if any(not x.homogeneous(0).is_zero() for x in X):
        raise NormalFormError("the field must vanish at the origin")
    lin: LinearPart = split_linear(linear_matrix(X))
    Y = vf_substitute_linear(X, lin.P, lin.P_inv)
    gamma = lin.eigenvalues
    ss = linear_field([[gamma[i] if i == j else K.zero for j in range(m)] for i in range(m)], maxdeg, K)
    Nmat = lin.N_eigen
    flags = []
    Nfield = None
    if not lin.diagonalizable:
        Nfield = linear_field(Nmat, maxdeg, K)
        flags.append("nilpotent-obstruction")
        warnings.warn("linear part is not semisimple; only commutation with X^ss is targeted", NilpotentObstruction, stacklevel=3)
    log: list[GeneratorStep] = []
    cur = Y
    for r in range(2, maxdeg + 1):
        _, groups = _split_nonresonant(vf_homogeneous(cur, r), gamma)
        if not groups:
            continue
        W = _homological_vf(groups, vf_homogeneous(cur, r), Nfield)
        cur = lie_transform_vf(W, cur)
        log.append(GeneratorStep(r, W))
    return NormalizeResult("vectorfield", maxdeg, gamma, lin.P, lin.P_inv, Y, cur, log, ss, flags)


# hamiltonian mode ----------------------------------------------------------------


def symplectic_eigenbasis(H: FormalSeries) -> tuple[list[Scalar], list[list[Scalar]]]:
    """Rows V with w = V z, {w_j, w_{n+j}} = 1 and H_2 = Σ λ_j w_j w_{n+j}.

    Rows are left eigenvectors of Π·Hess: {f_v, H_2} = μ f_v. For each ±λ
    pair the representative λ is the one that sorts first; the partner rows
    are rescaled so the pairing is canonical.
    """
    K = H.field
    m = H.m
    if m % 2:
        raise NormalFormError("hamiltonian mode needs an even number of canonical variables")
    n = m // 2
    Pi = structure_matrix(K, n)
    M = matmul(Pi, hessian(H))
    lin = split_linear(transpose(M))  # left eigenvectors of M
    if not lin.diagonalizable:
        raise NormalFormError("quadratic part is not semisimple; hamiltonian normalization needs a diagonalizable linearization")
    vecs: dict[tuple, list[list[Scalar]]] = {}
    vals: dict[tuple, Scalar] = {}
    for j, lam in enumerate(lin.eigenvalues):
        if lam.is_zero():
            raise NormalFormError("quadratic part is degenerate (zero eigenvalue)")
        vecs.setdefault(lam.c, []).append([lin.P[i][j] for i in range(m)])
        vals[lam.c] = lam
    keys = sorted(vals, key=lambda c: _key(vals[c]))
    q_rows, p_rows, lams = [], [], []
    used = set()
    for c in keys:
        if c in used:
            continue
        lam = vals[c]
        partner = (-lam).c
        if partner not in vals:
            raise NormalFormError("spectrum of the linearization is not symmetric")
        used |= {c, partner}
        Q = vecs[c]
        for qa, pa in zip(Q, _dual(Q, vecs[partner], Pi)):
            q_rows.append(qa)
            p_rows.append(pa)
            lams.append(lam)
    V = q_rows + p_rows
    for a in range(n):
        for b in range(n):
            if _pair(q_rows[a], p_rows[b], Pi) != (K.one if a == b else K.zero):
                raise NormalFormError("could not build a canonical eigenbasis")
    return lams, V


def _key(lam: Scalar):
    z = lam.mp()
    return (-float(mpmath.im(z)), -float(mpmath.re(z)), tuple(lam.c))


def _pair(u, v, Pi) -> Scalar:
    K = u[0].field
    acc = K.zero
    for a, ua in enumerate(u):
        if not ua:
            continue
        for b, vb in enumerate(v):
            if vb and Pi[a][b]:
                acc = acc + ua * Pi[a][b] * vb
    return acc


def _dual(Q, P, Pi):
    """Combinations of the rows P with {Q_a, P'_b} = δ_ab."""
    G = [[_pair(qa, pb, Pi) for pb in P] for qa in Q]
    # want P'_b = Σ_c T[b][c] P_c with Σ_c G[a][c] T[b][c] = δ_ab, i.e. T = (G^{-1})^T
    Ginv = inverse(G)
    K = Q[0][0].field
    m = len(P[0])
    out = []
    for b in range(len(P)):
        row = [K.zero] * m
        for c in range(len(P)):
            t = Ginv[c][b]
            if t:
                row = [r + t * pc for r, pc in zip(row, P[c])]
        out.append(row)
    return out


def _normalize_h(H: FormalSeries, maxdeg: int) -> NormalizeResult:
    K = H.field
    H = H.truncate(maxdeg)
    if not H.homogeneous(0).is_zero() or not H.homogeneous(1).is_zero():
        raise NormalFormError("H must start at degree 2 (critical point at the origin)")
    n = H.m // 2
    lams, V = symplectic_eigenbasis(H)
    Vinv = inverse(V)
    G = H.substitute_linear(Vinv)  # H as a function of w
    m = H.m
    H2 = FormalSeries(m, maxdeg, K, {tuple(int(a in (j, n + j)) for a in range(m)): lams[j] for j in range(n)})
    if G.homogeneous(2) != H2:
        raise NormalFormError("quadratic part did not diagonalize")
    log: list[GeneratorStep] = []
    cur = G
    for r in range(3, maxdeg + 1):
        chi_terms = {}
        for k, c in cur.homogeneous(r).terms.items():
            mu = K.zero
            for j in range(n):
                d = k[j] - k[n + j]
                if d:
                    mu = mu + lams[j] * d
            if not mu.is_zero():
                chi_terms[k] = -(c / mu)
        if not chi_terms:
            continue
        chi = FormalSeries(m, maxdeg, K, chi_terms)
        cur = lie_transform_h(chi, cur)
        log.append(GeneratorStep(r, chi))
    return NormalizeResult("hamiltonian", maxdeg, lams, Vinv, V, G, cur, log, H2, [])


def pd_normalize(X, maxdeg: int = 6, mode: str = "vectorfield") -> NormalizeResult:
    """Normalize a vector field (list of series) or a Hamiltonian (one series)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "hamiltonian":
        if not isinstance(X, FormalSeries):
            raise NormalFormError("hamiltonian mode takes a single series")
        return _normalize_h(X, maxdeg)
    if isinstance(X, FormalSeries):
        raise NormalFormError("vectorfield mode takes a list of component series")
    return _normalize_vf(list(X), maxdeg)


def replay(result: NormalizeResult, original) -> object:
    """Apply the logged linear change and generators to ``original``."""
    if result.mode == "hamiltonian":
        cur = original.truncate(result.maxdeg).substitute_linear(result.P)
        for step in result.log:
            cur = lie_transform_h(step.generator, cur)
        return cur
    cur = vf_substitute_linear([x.truncate(result.maxdeg) for x in original], result.P, result.P_inv)
    for step in result.log:
        cur = lie_transform_vf(step.generator, cur)
    return cur
