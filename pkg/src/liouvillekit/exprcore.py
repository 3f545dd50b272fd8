"""Scalar expressions: parsing, canonical printing, differentiation, evaluation.

Every function, field component and structure coefficient handled by the
package is declared as an infix expression over a fixed list of coordinate
names. Constants are exact rationals or named irrational symbols whose
numeric values come from an :class:`IrrationalBasis`.

Grammar (standard precedence, left associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' intexp)?
    intexp  := ['-'] INT | '(' ['-'] INT ')'
    atom    := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

UNARY_FUNCS = ("sin", "cos", "exp", "log", "sqrt")

PI_DIGITS = "3.14159265358979323846264338327950288419716939937511"


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    """Malformed source text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at byte offset {offset}")


class UnknownIdentifier(ExprSyntaxError):
    pass


class NonIntegerExponent(ExprSyntaxError):
    pass


class EvaluationDomainError(ExprError):
    def __init__(self, message: str, subtree: "Expr"):
        self.subtree = subtree
        super().__init__(f"{message} in subtree {to_string(subtree)!r}")


# ---------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n: int):
        return power(self, n)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Fraction

    def __repr__(self):
        return f"Const({self.value})"


@dataclass(frozen=True, eq=True)
class Named(Expr):
    name: str

    def __repr__(self):
        return f"Named({self.name})"


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int
    name: str

    def __repr__(self):
        return f"Var({self.name})"


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str  # 'neg' or one of UNARY_FUNCS
    arg: Expr


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str  # 'add', 'sub', 'mul', 'div'
    left: Expr
    right: Expr
    # division nodes are domain-checked at evaluation
    @property
    def checks_domain(self) -> bool:
        return self.op == "div"


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction)):
        return Const(Fraction(value))
    if isinstance(value, float):
        return Const(Fraction(value).limit_denominator(10**12))
    raise TypeError(f"cannot convert {value!r} to an expression")


def is_const(e: Expr, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# ---------------------------------------------------------------------------
# Smart constructors: constant folding and 0/1 identities only.


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if is_const(a, 0):
        return b
    if is_const(b, 0):
        return a
    if isinstance(b, Unary) and b.op == "neg":
        return sub(a, b.arg)
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if is_const(b, 0):
        return a
    if is_const(a, 0):
        return neg(b)
    if isinstance(b, Unary) and b.op == "neg":
        return add(a, b.arg)
    return Binary("sub", a, b)


def _split_coeff(e: Expr) -> tuple[Fraction, Expr | None]:
    if isinstance(e, Const):
        return e.value, None
    if isinstance(e, Binary) and e.op == "mul" and isinstance(e.left, Const):
        return e.left.value, e.right
    if isinstance(e, Unary) and e.op == "neg":
        c, rest = _split_coeff(e.arg)
        return -c, rest
    return Fraction(1), e


def _with_coeff(c: Fraction, rest: Expr | None) -> Expr:
    if rest is None:
        return Const(c)
    if c == 0:
        return ZERO
    if c == 1:
        return rest
    if c == -1:
        return neg(rest)
    return Binary("mul", Const(c), rest)


def mul(a: Expr, b: Expr) -> Expr:
    ca, ra = _split_coeff(a)
    cb, rb = _split_coeff(b)
    c = ca * cb
    if c == 0:
        return ZERO
    if ra is None:
        return _with_coeff(c, rb)
    if rb is None:
        return _with_coeff(c, ra)
    if ca == 1 and cb == 1:
        return Binary("mul", a, b)
    return _with_coeff(c, Binary("mul", ra, rb))


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 0:
            return Binary("div", a, b)  # left for the evaluator to reject
        ca, ra = _split_coeff(a)
        return _with_coeff(ca / b.value, ra)
    if is_const(a, 0):
        return ZERO
    return Binary("div", a, b)


def power(a: Expr, n: int) -> Expr:
    if not isinstance(n, int):
        raise TypeError("exponent must be an integer")
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const) and (a.value != 0 or n > 0):
        return Const(a.value**n)
    return Pow(a, n)


def func(op: str, a: Expr) -> Expr:
    if op not in UNARY_FUNCS:
        raise ValueError(f"unknown function {op}")
    if isinstance(a, Const) and a.value == 0:
        if op == "sin" or op == "sqrt":
            return ZERO
        if op in ("cos", "exp"):
            return ONE
    return Unary(op, a)


# ---------------------------------------------------------------------------
# Irrational constants


@dataclass(frozen=True)
class IrrationalBasis:
    """Named real constants, assumed Q-linearly independent together with 1.

    ``values`` maps each name to its decimal expansion (at least 30
    significant digits).
    """

    values: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name, text in self.values.items():
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
                raise ValueError(f"invalid constant name {name!r}")
            if name in UNARY_FUNCS:
                raise ValueError(f"constant name {name!r} shadows a function")
            d = Decimal(text)
            if not d.is_finite() or d == 0:
                raise ValueError(f"constant {name} must be finite and nonzero")
            digits = len(d.as_tuple().digits)
            if digits < 30:
                raise ValueError(
                    f"constant {name} needs >= 30 significant digits, got {digits}"
                )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.values)

    def float_value(self, name: str) -> float:
        if name in self.values:
            return float(Decimal(self.values[name]))
        if name == "pi":
            return math.pi
        raise KeyError(name)

    def decimal_value(self, name: str) -> str:
        if name in self.values:
            return self.values[name]
        if name == "pi":
            return PI_DIGITS
        raise KeyError(name)

    def __contains__(self, name) -> bool:
        return name in self.values or name == "pi"

    def merge(self, other: "IrrationalBasis") -> "IrrationalBasis":
        """Union of two bases; a name declared twice must agree."""
        if other is self or not other.values:
            return self
        if not self.values:
            return other
        vals = dict(self.values)
        for k, v in other.values.items():
            if k in vals and Decimal(vals[k]) != Decimal(v):
                raise ValueError(f"constant {k} declared with two values")
            vals[k] = v
        return IrrationalBasis(vals)


DEFAULT_BASIS = IrrationalBasis({})


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(source, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", _byte(source, pos), source)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        pos = m.end()
    toks.append(_Tok("end", "", len(source)))
    return toks


def _byte(source: str, char_pos: int) -> int:
    return len(source[:char_pos].encode("utf-8"))


class _Parser:
    def __init__(self, source: str, coords: Sequence[str], basis: IrrationalBasis):
        self.source = source
        self.coords = {name: i for i, name in enumerate(coords)}
        self.basis = basis
        self.toks = _tokenize(source)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, cls, msg, tok: _Tok):
        raise cls(msg, _byte(self.source, tok.offset), self.source)

    def expect(self, text: str):
        t = self.take()
        if t.text != text:
            self.error(ExprSyntaxError, f"expected {text!r}, found {t.text or 'end of input'!r}", t)

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t.kind != "end":
            self.error(ExprSyntaxError, f"unexpected token {t.text!r}", t)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            e = Binary("add" if op == "+" else "sub", e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            rhs = self.unary()
            if op == "/" and isinstance(e, Const) and isinstance(rhs, Const) and rhs.value != 0:
                e = Const(e.value / rhs.value)
            else:
                e = Binary("mul" if op == "*" else "div", e, rhs)
        return e

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.take()
            arg = self.unary()
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Unary("neg", arg)
        if self.peek().text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            return Pow(base, self.int_exponent())
        return base

    def int_exponent(self) -> int:
        start = self.peek()
        paren = False
        if start.text == "(":
            self.take()
            paren = True
        sign = 1
        if self.peek().text == "-":
            self.take()
            sign = -1
        t = self.take()
        if t.kind != "num" or not t.text.isdigit():
            self.error(NonIntegerExponent, "exponent must be an integer literal", start)
        if paren:
            if self.peek().text != ")":
                self.error(NonIntegerExponent, "exponent must be an integer literal", start)
            self.take()
        return sign * int(t.text)

    def atom(self) -> Expr:
        t = self.take()
        if t.kind == "num":
            return Const(Fraction(t.text))
        if t.kind == "name":
            if t.text in UNARY_FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(t.text, arg)
            if t.text in self.coords:
                return Var(self.coords[t.text], t.text)
            if t.text in self.basis:
                return Named(t.text)
            self.error(UnknownIdentifier, f"unknown identifier {t.text!r}", t)
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.error(ExprSyntaxError, f"unexpected {t.text or 'end of input'!r}", t)


def parse_expr(source: str, coords: Sequence[str], basis: IrrationalBasis = DEFAULT_BASIS) -> Expr:
    """Parse ``source`` over the coordinate names ``coords``.

    The returned tree is in canonical form (see :func:`canonical`), so
    ``parse(print(parse(s)))`` reproduces ``parse(s)`` exactly.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source)
    if not coords or len(set(coords)) != len(coords):
        raise ValueError("coordinate names must be nonempty and unique")
    for name in coords:
        if name in UNARY_FUNCS or name in basis:
            raise ValueError(f"coordinate name {name!r} clashes with a reserved name")
    return canonical(_Parser(source, coords, basis).parse())


# ---------------------------------------------------------------------------
# Canonical form and printing


def sort_key(e: Expr):
    if isinstance(e, Const):
        return (0, e.value)
    if isinstance(e, Named):
        return (1, e.name)
    if isinstance(e, Var):
        return (2, e.index)
    if isinstance(e, Unary):
        return (3, e.op, sort_key(e.arg))
    if isinstance(e, Pow):
        return (4, sort_key(e.base), e.exponent)
    return (5, e.op, sort_key(e.left), sort_key(e.right))


def canonical(e: Expr) -> Expr:
    """Order the children of commutative nodes and fold literal signs/quotients.

    No other rewriting is done; this is the form the parser returns.
    """
    if isinstance(e, Unary):
        a = canonical(e.arg)
        if e.op == "neg" and isinstance(a, Const):
            return Const(-a.value)
        return Unary(e.op, a)
    if isinstance(e, Pow):
        return Pow(canonical(e.base), e.exponent)
    if isinstance(e, Binary):
        a, b = canonical(e.left), canonical(e.right)
        if e.op == "div" and isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
            return Const(a.value / b.value)
        if e.op in ("add", "mul") and sort_key(b) < sort_key(a):
            a, b = b, a
        return Binary(e.op, a, b)
    return e


_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _const_str(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def to_string(e: Expr) -> str:
    """Canonical printer; the text re-parses to the same tree."""
    return _fmt(e, 0)


def _fmt(e: Expr, ctx: int) -> str:
    # ctx: binding strength required by the parent (0 none, 1 sum, 2 product,
    # 3 unary operand, 4 power base)
    if isinstance(e, Const):
        s = _const_str(e.value)
        if e.value < 0 or (e.value.denominator != 1 and ctx >= 2):
            return f"({s})"
        return s
    if isinstance(e, (Named, Var)):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            s = "-" + _fmt(e.arg, 3)
            return f"({s})" if ctx >= 1 else s
        return f"{e.op}({_fmt(e.arg, 0)})"
    if isinstance(e, Pow):
        s = f"{_fmt(e.base, 4)}^{e.exponent if e.exponent >= 0 else f'({e.exponent})'}"
        return f"({s})" if ctx >= 4 else s
    p = _PREC[e.op]
    left = _fmt(e.left, p)
    # right operand of the same precedence is always bracketed so that the
    # tree shape survives a round trip
    right = _fmt(e.right, p + 1)
    s = f"{left} {_SYM[e.op]} {right}"
    return f"({s})" if ctx > p else s


# ---------------------------------------------------------------------------
# Differentiation


def diff_expr(e: Expr, var: int | str, coords: Sequence[str] | None = None) -> Expr:
    """Exact derivative with respect to coordinate ``var`` (index or name)."""
    if isinstance(var, str):
        if coords is None:
            raise ValueError("coords are required when differentiating by name")
        var = list(coords).index(var)
    return _diff(e, var)


def _diff(e: Expr, k: int) -> Expr:
    if isinstance(e, (Const, Named)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == k else ZERO
    if isinstance(e, Unary):
        da = _diff(e.arg, k)
        if e.op == "neg":
            return neg(da)
        if is_const(da, 0):
            return ZERO
        a = e.arg
        if e.op == "sin":
            return mul(func("cos", a), da)
        if e.op == "cos":
            return neg(mul(func("sin", a), da))
        if e.op == "exp":
            return mul(e, da)
        if e.op == "log":
            return div(da, a)
        if e.op == "sqrt":
            return div(da, mul(Const(Fraction(2)), e))
    if isinstance(e, Pow):
        da = _diff(e.base, k)
        if is_const(da, 0):
            return ZERO
        return mul(mul(Const(Fraction(e.exponent)), power(e.base, e.exponent - 1)), da)
    if isinstance(e, Binary):
        a, b = e.left, e.right
        da, db = _diff(a, k), _diff(b, k)
        if e.op == "add":
            return add(da, db)
        if e.op == "sub":
            return sub(da, db)
        if e.op == "mul":
            return add(mul(da, b), mul(a, db))
        if e.op == "div":
            if isinstance(b, Const):
                return div(da, b)
            return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    raise TypeError(f"unknown node {e!r}")


def gradient(e: Expr, m: int) -> list[Expr]:
    return [_diff(e, k) for k in range(m)]


def variables(e: Expr) -> set[int]:
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set()


# ---------------------------------------------------------------------------
# Evaluation


def eval_expr(e: Expr, point: Sequence[float], basis: IrrationalBasis = DEFAULT_BASIS) -> float:
    """Evaluate at a point with domain checks (division by zero, log/sqrt)."""
    return float(_eval(e, point, basis))


def _eval(e: Expr, x, basis) -> float:
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Named):
        return basis.float_value(e.name)
    if isinstance(e, Var):
        if e.index >= len(x):
            raise ValueError("point dimension does not match the declared coordinates")
        return float(x[e.index])
    if isinstance(e, Unary):
        a = _eval(e.arg, x, basis)
        if e.op == "neg":
            return -a
        if e.op == "log":
            if a <= 0:
                raise EvaluationDomainError("log of a non-positive value", e)
            return math.log(a)
        if e.op == "sqrt":
            if a < 0:
                raise EvaluationDomainError("sqrt of a negative value", e)
            return math.sqrt(a)
        if e.op == "exp":
            try:
                return math.exp(a)
            except OverflowError:
                raise EvaluationDomainError("exp overflow", e) from None
        return getattr(math, e.op)(a)
    if isinstance(e, Pow):
        a = _eval(e.base, x, basis)
        if a == 0 and e.exponent < 0:
            raise EvaluationDomainError("division by zero", e)
        try:
            return a**e.exponent
        except OverflowError:
            raise EvaluationDomainError("overflow", e) from None
    a = _eval(e.left, x, basis)
    b = _eval(e.right, x, basis)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if b == 0:
        raise EvaluationDomainError("division by zero", e)
    return a / b


def to_python(e: Expr, basis: IrrationalBasis = DEFAULT_BASIS) -> str:
    """Numpy source for ``e`` reading coordinates from ``x[i]``."""
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Named):
        return repr(basis.float_value(e.name))
    if isinstance(e, Var):
        return f"x[{e.index}]"
    if isinstance(e, Unary):
        a = to_python(e.arg, basis)
        if e.op == "neg":
            return f"(-{a})"
        return f"_np.{e.op}({a})"
    if isinstance(e, Pow):
        a = to_python(e.base, basis)
        if e.exponent < 0:
            return f"(1.0/({a})**{-e.exponent})"
        return f"(({a})**{e.exponent})"
    return f"({to_python(e.left, basis)} {_SYM[e.op]} {to_python(e.right, basis)})"


def compile_exprs(
    exprs: Sequence[Expr], basis: IrrationalBasis = DEFAULT_BASIS
) -> Callable[[np.ndarray], np.ndarray]:
    """Compile expressions into one vectorized function.

    The function takes ``x`` of shape ``(m,)`` or ``(m, n)`` and returns an
    array of shape ``(len(exprs),)`` or ``(len(exprs), n)``. No domain checks
    are made on this fast path.
    """
    body = ", ".join(f"_b({to_python(e, basis)}, x)" for e in exprs)
    src = f"def _f(x):\n    return _np.array([{body}])\n"
    ns = {"_np": np, "_b": _broadcast}
    exec(src, ns)
    return ns["_f"]


def _broadcast(value, x):
    x = np.asarray(x)
    if x.ndim > 1 and np.ndim(value) == 0:
        return np.full(x.shape[1:], float(value))
    return value
