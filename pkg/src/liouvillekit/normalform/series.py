"""Truncated multivariate power series with exact number-field coefficients."""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

from .field import NumberField, Scalar

Exponent = tuple[int, ...]


def monomials(m: int, degree: int) -> list[Exponent]:
    """All exponents of total degree ``degree`` in ``m`` variables (lex order)."""
    out = []
    for cut in itertools.combinations(range(degree + m - 1), m - 1):
        prev = -1
        k = []
        for c in cut + (degree + m - 1,):
            k.append(c - prev - 1)
            prev = c
        out.append(tuple(k))
    return sorted(out, reverse=True)


class FormalSeries:
    """Map exponent -> coefficient truncated at total degree ``N``.

    Zero coefficients are never stored; neither are degrees above ``N``.
    Instances are treated as immutable.
    """

    __slots__ = ("m", "N", "field", "terms")

    def __init__(self, m: int, N: int, field: NumberField, terms: dict[Exponent, Scalar] | None = None):
        self.m = m
        self.N = N
        self.field = field
        clean = {}
        for k, c in (terms or {}).items():
            if len(k) != m:
                raise ValueError(f"exponent {k} does not have {m} entries")
            if min(k, default=0) < 0:
                raise ValueError(f"negative exponent {k}")
            if sum(k) <= N and not c.is_zero():
                clean[tuple(k)] = c
        self.terms = clean

    # construction ----------------------------------------------------------

    def _new(self, terms) -> "FormalSeries":
        out = FormalSeries.__new__(FormalSeries)
        out.m, out.N, out.field, out.terms = self.m, self.N, self.field, terms
        return out

    @classmethod
    def zero(cls, m: int, N: int, field: NumberField) -> "FormalSeries":
        return cls(m, N, field)

    @classmethod
    def variable(cls, m: int, N: int, field: NumberField, i: int) -> "FormalSeries":
        k = [0] * m
        k[i] = 1
        return cls(m, N, field, {tuple(k): field.one})

    @classmethod
    def from_dict(cls, m: int, N: int, field: NumberField, coeffs: dict) -> "FormalSeries":
        return cls(m, N, field, {tuple(k): field(v) for k, v in coeffs.items()})

    # queries -----------------------------------------------------------------

    def __getitem__(self, k) -> Scalar:
        return self.terms.get(tuple(k), self.field.zero)

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        return isinstance(other, FormalSeries) and self.m == other.m and self.terms == other.terms

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def degrees(self) -> list[int]:
        return sorted({sum(k) for k in self.terms})

    def homogeneous(self, r: int) -> "FormalSeries":
        return self._new({k: c for k, c in self.terms.items() if sum(k) == r})

    def truncate(self, N: int) -> "FormalSeries":
        out = FormalSeries(self.m, N, self.field, {k: c for k, c in self.terms.items() if sum(k) <= N})
        return out

    def below(self, r: int) -> "FormalSeries":
        return self._new({k: c for k, c in self.terms.items() if sum(k) < r})

    # arithmetic --------------------------------------------------------------

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        t = dict(self.terms)
        for k, c in other.terms.items():
            v = t.get(k)
            v = c if v is None else v + c
            if v.is_zero():
                t.pop(k, None)
            else:
                t[k] = v
        return self._new(t)

    def __neg__(self) -> "FormalSeries":
        return self._new({k: -c for k, c in self.terms.items()})

    def __sub__(self, other: "FormalSeries") -> "FormalSeries":
        return self + (-other)

    def scale(self, s) -> "FormalSeries":
        s = self.field(s) if not isinstance(s, Scalar) else s
        if s.is_zero():
            return self._new({})
        return self._new({k: c * s for k, c in self.terms.items()})

    def __mul__(self, other: "FormalSeries") -> "FormalSeries":
        if not isinstance(other, FormalSeries):
            return self.scale(other)
        t: dict[Exponent, Scalar] = {}
        N = self.N
        for ka, ca in self.terms.items():
            da = sum(ka)
            for kb, cb in other.terms.items():
                if da + sum(kb) > N:
                    continue
                k = tuple(a + b for a, b in zip(ka, kb))
                v = ca * cb
                old = t.get(k)
                t[k] = v if old is None else old + v
        return self._new({k: c for k, c in t.items() if not c.is_zero()})

    def diff(self, i: int) -> "FormalSeries":
        t = {}
        for k, c in self.terms.items():
            if k[i]:
                kk = list(k)
                kk[i] -= 1
                t[tuple(kk)] = c * k[i]
        return self._new(t)

    def substitute_linear(self, M: Sequence[Sequence[Scalar]]) -> "FormalSeries":
        """f(M z): old variable a becomes sum_j M[a][j] z_j."""
        lin = [
            FormalSeries(self.m, self.N, self.field, {tuple(int(b == j) for b in range(self.m)): M[a][j] for j in range(self.m)})
            for a in range(self.m)
        ]
        powers: dict[tuple[int, int], FormalSeries] = {}

        def pw(a: int, e: int) -> FormalSeries:
            if e == 0:
                return FormalSeries(self.m, self.N, self.field, {(0,) * self.m: self.field.one})
            if (a, e) not in powers:
                powers[(a, e)] = pw(a, e - 1) * lin[a]
            return powers[(a, e)]

        out = self._new({})
        for k, c in self.terms.items():
            term = None
            for a, e in enumerate(k):
                if e:
                    term = pw(a, e) if term is None else term * pw(a, e)
            if term is None:
                term = pw(0, 0)
            out = out + term.scale(c)
        return out

    # text I/O ----------------------------------------------------------------

    def to_text(self) -> str:
        """One line per monomial ``k_1 ... k_m : coefficient``, graded-lex order."""
        keys = sorted(self.terms, key=lambda k: (sum(k), tuple(-e for e in k)))
        return "".join(f"{' '.join(map(str, k))} : {self.terms[k]}\n" for k in keys)

    @classmethod
    def from_text(cls, text: str, m: int, N: int, field: NumberField) -> "FormalSeries":
        terms: dict[Exponent, Scalar] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise ValueError(f"line {lineno}: expected 'k_1 ... k_m : coefficient'")
            left, right = line.split(":", 1)
            k = tuple(int(v) for v in left.split())
            if len(k) != m:
                raise ValueError(f"line {lineno}: {len(k)} exponents for {m} variables")
            c = field.parse(right)
            terms[k] = terms[k] + c if k in terms else c
        return cls(m, N, field, terms)

    def __repr__(self):
        return f"FormalSeries(m={self.m}, N={self.N}, terms={len(self.terms)})"


# vector fields are lists of component series ----------------------------------

VectorSeries = list  # list[FormalSeries]


def vf_add(A: Sequence[FormalSeries], B: Sequence[FormalSeries]) -> list[FormalSeries]:
    return [a + b for a, b in zip(A, B)]


def vf_scale(A: Sequence[FormalSeries], s) -> list[FormalSeries]:
    return [a.scale(s) for a in A]


def vf_homogeneous(A: Sequence[FormalSeries], r: int) -> list[FormalSeries]:
    return [a.homogeneous(r) for a in A]


def vf_is_zero(A: Iterable[FormalSeries]) -> bool:
    return all(a.is_zero() for a in A)


def vf_apply(A: Sequence[FormalSeries], f: FormalSeries) -> FormalSeries:
    """Directional derivative A(f) = sum_a A^a d_a f."""
    out = f._new({})
    for a, comp in enumerate(A):
        if comp.terms:
            d = f.diff(a)
            if d.terms:
                out = out + comp * d
    return out


def vf_bracket(A: Sequence[FormalSeries], B: Sequence[FormalSeries]) -> list[FormalSeries]:
    """[A, B]^j = A(B^j) - B(A^j)."""
    return [vf_apply(A, b) - vf_apply(B, a) for a, b in zip(A, B)]


def poisson(f: FormalSeries, g: FormalSeries) -> FormalSeries:
    """Canonical bracket, variables ordered (x_1..x_n, y_1..y_n), {x_i, y_i} = 1."""
    n = f.m // 2
    out = f._new({})
    for i in range(n):
        fx, fy = f.diff(i), f.diff(n + i)
        gx, gy = g.diff(i), g.diff(n + i)
        if fx.terms and gy.terms:
            out = out + fx * gy
        if fy.terms and gx.terms:
            out = out - fy * gx
    return out


def vf_substitute_linear(A: Sequence[FormalSeries], P, Pinv) -> list[FormalSeries]:
    """Pull back the field x' = A(x) through x = P z: z' = P^{-1} A(P z)."""
    m = len(A)
    sub = [a.substitute_linear(P) for a in A]
    out = []
    for i in range(m):
        acc = sub[0]._new({})
        for j in range(m):
            if not Pinv[i][j].is_zero() and sub[j].terms:
                acc = acc + sub[j].scale(Pinv[i][j])
        out.append(acc)
    return out


def vf_to_text(A: Sequence[FormalSeries]) -> str:
    return "".join(f"# component {j + 1}\n" + a.to_text() for j, a in enumerate(A))


def vf_from_text(text: str, m: int, N: int, field: NumberField) -> list[FormalSeries]:
    blocks: list[list[str]] = []
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("# component"):
            blocks.append([])
        elif blocks:
            blocks[-1].append(line)
        elif s and not s.startswith("#"):
            raise ValueError("vector series text must start with '# component 1'")
    if len(blocks) != m:
        raise ValueError(f"expected {m} components, found {len(blocks)}")
    return [FormalSeries.from_text("\n".join(b), m, N, field) for b in blocks]
