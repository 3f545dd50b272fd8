"""Exact arithmetic in finite-dimensional number fields.

A field is given by a Q-basis ``1 = e_0, e_1, ..., e_r`` (named), a
multiplication table ``e_i e_j = sum_k c_ijk e_k`` and a complex value for
each basis element (used only to identify roots, never to decide equality).
Scalars are coordinate vectors of rationals (``gmpy2.mpq``).
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import mpmath
from gmpy2 import mpq

from .. import lattice

mpmath.mp.dps = 60


class FieldError(ArithmeticError):
    pass


def _q(v) -> mpq:
    if isinstance(v, Fraction):
        return mpq(v.numerator, v.denominator)
    return mpq(v)


class NumberField:
    """Q-algebra with basis names, multiplication table and complex embedding."""

    def __init__(self, names: Sequence[str], table: dict[tuple[int, int], dict[int, object]], values: Sequence, real_flags: Sequence[bool] | None = None):
        self.names = ("1",) + tuple(names)
        self.dim = len(self.names)
        self.values = [mpmath.mpc(1)] + [mpmath.mpc(v) for v in values]
        if len(self.values) != self.dim:
            raise FieldError("one value per basis element is required")
        # full table including the unit
        self._mul: list[list[list[tuple[int, mpq]]]] = [[[] for _ in range(self.dim)] for _ in range(self.dim)]
        for i in range(self.dim):
            for j in range(self.dim):
                if i == 0:
                    entry = {j: 1}
                elif j == 0:
                    entry = {i: 1}
                else:
                    entry = table.get((i, j), table.get((j, i)))
                    if entry is None:
                        raise FieldError(f"multiplication table misses {self.names[i]}*{self.names[j]}")
                self._mul[i][j] = [(k, _q(c)) for k, c in sorted(entry.items()) if c != 0]
        if real_flags is None:
            real_flags = [abs(mpmath.im(v)) < mpmath.mpf(10) ** -40 for v in self.values[1:]]
        self.real_flags = (True,) + tuple(real_flags)
        self.imag_flags = tuple(abs(mpmath.re(v)) < mpmath.mpf(10) ** -40 and not r for v, r in zip(self.values, self.real_flags))
        self._check_values()

    def _check_values(self):
        for i in range(self.dim):
            for j in range(self.dim):
                lhs = self.values[i] * self.values[j]
                rhs = sum((mpmath.mpf(int(c.numerator)) / int(c.denominator) * self.values[k] for k, c in self._mul[i][j]), mpmath.mpc(0))
                if abs(lhs - rhs) > mpmath.mpf(10) ** -30 * max(1, abs(lhs)):
                    raise FieldError(f"declared value of {self.names[i]}*{self.names[j]} disagrees with the table")

    # constructors ----------------------------------------------------------

    @classmethod
    def rationals(cls) -> "NumberField":
        return cls((), {}, ())

    @classmethod
    def square_roots(cls, radicands: dict[str, int]) -> "NumberField":
        """Compositum of Q(√d) for the given squarefree integers (``i`` for -1).

        The basis is every product of a subset of the named roots; names are
        joined with ``*`` in declaration order.
        """
        gens = list(radicands.items())
        subsets = [s for r in range(1, len(gens) + 1) for s in itertools.combinations(range(len(gens)), r)]
        index = {(): 0}
        for n, s in enumerate(subsets, start=1):
            index[s] = n
        names = ["*".join(gens[i][0] for i in s) for s in subsets]
        table = {}
        for a, sa in enumerate([()] + subsets):
            for b, sb in enumerate([()] + subsets):
                if a == 0 or b == 0:
                    continue
                coeff = 1
                for i in set(sa) & set(sb):
                    coeff *= gens[i][1]
                sym = tuple(sorted(set(sa) ^ set(sb)))
                table[(a, b)] = {index[sym]: coeff}
        values = []
        flags = []
        for s in subsets:
            v = mpmath.mpc(1)
            neg = 0
            for i in s:
                d = gens[i][1]
                v *= mpmath.sqrt(mpmath.mpc(d))
                neg += d < 0
            values.append(v)
            flags.append(neg % 2 == 0)
        return cls(names, table, values, flags)

    @classmethod
    def gaussian(cls) -> "NumberField":
        return cls.square_roots({"i": -1})

    @classmethod
    def quadratic(cls, d: int, name: str | None = None) -> "NumberField":
        return cls.square_roots({name or (f"s{d}" if d > 0 else "i"): d})

    # scalars ---------------------------------------------------------------

    def __call__(self, value=0) -> "Scalar":
        """Scalar from an int/Fraction/str like '3/2' or a coordinate dict/list."""
        if isinstance(value, Scalar):
            return value
        if isinstance(value, dict):
            c = [mpq(0)] * self.dim
            for k, v in value.items():
                c[self.index(k) if isinstance(k, str) else k] = _q(v)
            return Scalar(self, tuple(c))
        if isinstance(value, (list, tuple)):
            if len(value) != self.dim:
                raise FieldError("coordinate vector has the wrong length")
            return Scalar(self, tuple(_q(v) for v in value))
        if isinstance(value, str):
            return self.parse(value)
        c = [mpq(0)] * self.dim
        c[0] = _q(value)
        return Scalar(self, tuple(c))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise FieldError(f"unknown basis element {name!r}") from None

    def gen(self, name: str) -> "Scalar":
        c = [mpq(0)] * self.dim
        c[self.index(name)] = mpq(1)
        return Scalar(self, tuple(c))

    @cached_property
    def zero(self) -> "Scalar":
        return Scalar(self, tuple(mpq(0) for _ in range(self.dim)))

    @cached_property
    def one(self) -> "Scalar":
        return self(1)

    def mul_coords(self, a, b):
        if self.dim == 1:
            return (a[0] * b[0],)
        out = [mpq(0)] * self.dim
        for i, ai in enumerate(a):
            if not ai:
                continue
            row = self._mul[i]
            for j, bj in enumerate(b):
                if not bj:
                    continue
                p = ai * bj
                for k, c in row[j]:
                    out[k] += c * p
        return tuple(out)

    def mult_matrix(self, a) -> list[list[mpq]]:
        """Matrix of x -> a x acting on coordinate columns."""
        cols = []
        for j in range(self.dim):
            e = [mpq(0)] * self.dim
            e[j] = mpq(1)
            cols.append(self.mul_coords(a, e))
        return [[cols[j][i] for j in range(self.dim)] for i in range(self.dim)]

    def inv_coords(self, a):
        if self.dim == 1:
            if not a[0]:
                raise ZeroDivisionError("division by zero in Q")
            return (1 / a[0],)
        M = self.mult_matrix(a)
        rhs = [mpq(1)] + [mpq(0)] * (self.dim - 1)
        aug = [[Fraction(int(v.numerator), int(v.denominator)) for v in row] + [Fraction(int(r))] for row, r in zip(M, rhs)]
        red, piv = lattice.rref(aug)
        if len(piv) < self.dim or self.dim in piv:
            raise ZeroDivisionError("element is not invertible in the declared algebra")
        return tuple(_q(row[-1]) for row in red)

    def parse(self, text: str) -> "Scalar":
        """Parse ``q`` / ``q*name`` terms joined by ``+`` (as printed)."""
        text = text.strip()
        if not text:
            raise FieldError("empty coefficient")
        c = [mpq(0)] * self.dim
        for term in _split_terms(text):
            if "*" in term and term.split("*", 1)[0].strip().lstrip("-").replace("/", "").isdigit():
                num, name = term.split("*", 1)
                c[self.index(name.strip())] += mpq(num.strip())
            elif term.lstrip("-") in self.names[1:]:
                sign = -1 if term.startswith("-") else 1
                c[self.index(term.lstrip("-"))] += sign
            else:
                c[0] += mpq(term)
        return Scalar(self, tuple(c))

    def __eq__(self, other):
        return isinstance(other, NumberField) and self.names == other.names and self._mul == other._mul

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"NumberField({', '.join(self.names[1:]) or 'Q'})"


def _split_terms(text: str) -> list[str]:
    terms = []
    cur = ""
    for ch in text.replace(" ", ""):
        if ch in "+" and cur and cur[-1] not in "*/":
            terms.append(cur)
            cur = ""
        elif ch == "-" and cur and cur[-1] not in "*/":
            terms.append(cur)
            cur = "-"
        else:
            cur += ch
    if cur:
        terms.append(cur)
    return [t for t in terms if t not in ("", "+")]


class Scalar:
    """Exact element of a :class:`NumberField`."""

    __slots__ = ("field", "c")

    def __init__(self, field: NumberField, coords: tuple):
        self.field = field
        self.c = coords

    def _lift(self, other) -> "Scalar":
        if isinstance(other, Scalar):
            return other
        return self.field(other)

    def __add__(self, other):
        o = self._lift(other)
        return Scalar(self.field, tuple(a + b for a, b in zip(self.c, o.c)))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Scalar(self.field, tuple(a - b for a, b in zip(self.c, o.c)))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Scalar(self.field, tuple(-a for a in self.c))

    def __mul__(self, other):
        if isinstance(other, Scalar):
            return Scalar(self.field, self.field.mul_coords(self.c, other.c))
        o = _q(other) if not isinstance(other, type(mpq(0))) else other
        return Scalar(self.field, tuple(a * o for a in self.c))

    __rmul__ = __mul__

    def inverse(self) -> "Scalar":
        return Scalar(self.field, self.field.inv_coords(self.c))

    def __truediv__(self, other):
        if isinstance(other, Scalar):
            return self * other.inverse()
        return self * (1 / _q(other))

    def __rtruediv__(self, other):
        return self._lift(other) * self.inverse()

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        out = self.field.one
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, Scalar):
            return self.c == other.c
        try:
            return self.c == self._lift(other).c
        except (TypeError, FieldError):
            return NotImplemented

    def __hash__(self):
        return hash(self.c)

    def __bool__(self):
        return any(self.c)

    def is_zero(self) -> bool:
        return not any(self.c)

    def is_rational(self) -> bool:
        return not any(self.c[1:])

    def coords_fraction(self) -> list[Fraction]:
        return [Fraction(int(v.numerator), int(v.denominator)) for v in self.c]

    def complex(self) -> complex:
        return complex(self.mp())

    def mp(self):
        return sum((mpmath.mpf(int(v.numerator)) / int(v.denominator) * b for v, b in zip(self.c, self.field.values) if v), mpmath.mpc(0))

    def real_part(self) -> "Scalar":
        """Part on basis elements with real values."""
        return Scalar(self.field, tuple(v if r else mpq(0) for v, r in zip(self.c, self.field.real_flags)))

    def imag_part_coords(self) -> tuple:
        return tuple(v if f else mpq(0) for v, f in zip(self.c, self.field.imag_flags))

    def __str__(self):
        terms = []
        for v, name in zip(self.c, self.field.names):
            if not v:
                continue
            q = str(v)
            terms.append(q if name == "1" else f"{q}*{name}")
        return " + ".join(terms) if terms else "0"

    def __repr__(self):
        return f"Scalar({self})"


def identify(field: NumberField, z, maxcoeff: int = 10**6) -> Scalar | None:
    """Guess the field element closest to the complex number ``z`` (PSLQ).

    Real and imaginary parts are folded with an irrational weight so one
    integer relation fixes all coordinates. The caller must verify exactly.
    """
    z = mpmath.mpc(z)
    kappa = mpmath.e
    vec = [mpmath.re(z) + kappa * mpmath.im(z)] + [-(mpmath.re(b) + kappa * mpmath.im(b)) for b in field.values]
    if abs(vec[0]) < mpmath.mpf(10) ** -40:
        return field.zero
    rel = mpmath.pslq(vec, maxcoeff=maxcoeff, maxsteps=10**5, tol=mpmath.mpf(10) ** -35)
    if rel is None or rel[0] == 0:
        return None
    return field([Fraction(r, rel[0]) for r in rel[1:]])


def scalars(field: NumberField, values: Iterable) -> list[Scalar]:
    return [field(v) for v in values]
