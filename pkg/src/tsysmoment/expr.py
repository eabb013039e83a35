"""Univariate closed-form expressions: parsing, printing, evaluation and
exact symbolic differentiation.

The grammar is closed under differentiation, so :func:`differentiate` is
total::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' integer)?
    base   := number | 'x' | func '(' expr ')' | '(' expr ')'
    func   := 'exp' | 'log' | 'sin' | 'cos' | 'sqrt'

Unary minus is accepted so that every derivative can be printed and
re-parsed; parsed literals are always nonnegative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import DomainError, ParseError

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


class Expression:
    """Base class of the immutable expression tree."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)

    def __call__(self, x):
        return evaluate(self, x)


@dataclass(frozen=True, slots=True)
class Num(Expression):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True, slots=True)
class Var(Expression):
    pass


@dataclass(frozen=True, slots=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True, slots=True)
class Add(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True)
class Sub(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True)
class Mul(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True)
class Div(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True)
class Pow(Expression):
    base: Expression
    exponent: int


@dataclass(frozen=True, slots=True)
class Func(Expression):
    name: str
    arg: Expression

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")


X = Var()
ZERO = Num(0.0)
ONE = Num(1.0)

Scalar = Union[float, np.ndarray]


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^()])
    )""",
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind != "op":
            found = text or "end of input"
            raise ParseError(f"expected {value!r}, found {found!r}", off)

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expression:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Expression:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.factor())
        node = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            node = Pow(node, self.integer())
        return node

    def integer(self) -> int:
        sign = 1
        kind, text, off = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            sign = -1 if text == "-" else 1
            kind, text, off = self.peek()
        if kind != "number" or not text.isdigit():
            raise ParseError("exponent must be an integer literal", off)
        self.take()
        return sign * int(text)

    def base(self) -> Expression:
        kind, text, off = self.take()
        if kind == "number":
            return Num(float(text))
        if kind == "name":
            if text == "x":
                return X
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            raise ParseError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = text or "end of input"
        raise ParseError(f"unexpected {found!r}", off)


def parse(source: str) -> Expression:
    """Parse ``source`` into an expression tree.

    Raises :class:`ParseError` carrying the offset of the offending token.
    """
    if not isinstance(source, str):
        raise TypeError("expression source must be a string")
    p = _Parser(source)
    node = p.expr()
    kind, text, off = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected trailing input {text!r}", off)
    return node


# --------------------------------------------------------------- printing

def _prec(e: Expression) -> int:
    if isinstance(e, (Add, Sub)):
        return 1
    if isinstance(e, (Mul, Div)):
        return 2
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    if isinstance(e, Num) and e.value < 0:
        return 3
    return 5


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(e: Expression) -> str:
    if isinstance(e, Num):
        if e.value < 0:
            return "-" + _fmt_number(-e.value)
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        return f"-({inner})" if _prec(e.arg) < 3 else f"-{inner}"
    if isinstance(e, Pow):
        inner = to_string(e.base)
        if _prec(e.base) < 5:
            inner = f"({inner})"
        return f"{inner}^{e.exponent}"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    p = _prec(e)
    lhs, rhs = to_string(e.left), to_string(e.right)
    if _prec(e.left) < p:
        lhs = f"({lhs})"
    if _prec(e.right) <= p:
        rhs = f"({rhs})"
    return f"{lhs} {op} {rhs}"


# ------------------------------------------------------------- evaluation

def _domain_check(ok, what: str):
    if not np.all(ok):
        raise DomainError(what)


def _eval(e: Expression, x):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x
    if isinstance(e, Neg):
        return -_eval(e.arg, x)
    if isinstance(e, Add):
        return _eval(e.left, x) + _eval(e.right, x)
    if isinstance(e, Sub):
        return _eval(e.left, x) - _eval(e.right, x)
    if isinstance(e, Mul):
        return _eval(e.left, x) * _eval(e.right, x)
    if isinstance(e, Div):
        den = _eval(e.right, x)
        _domain_check(np.asarray(den) != 0, f"division by zero in {to_string(e)}")
        return _eval(e.left, x) / den
    if isinstance(e, Pow):
        base = _eval(e.base, x)
        if e.exponent < 0:
            _domain_check(np.asarray(base) != 0, f"zero to a negative power in {to_string(e)}")
            return 1.0 / np.power(base, -e.exponent)
        return np.power(base, e.exponent)
    if isinstance(e, Func):
        u = _eval(e.arg, x)
        if e.name == "exp":
            return np.exp(u)
        if e.name == "log":
            _domain_check(np.asarray(u) > 0, f"log of nonpositive value in {to_string(e)}")
            return np.log(u)
        if e.name == "sqrt":
            _domain_check(np.asarray(u) >= 0, f"sqrt of negative value in {to_string(e)}")
            return np.sqrt(u)
        if e.name == "sin":
            return np.sin(u)
        return np.cos(u)
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e: Expression, x: Scalar) -> Scalar:
    """Evaluate ``e`` at a point or elementwise over an array of points.

    Scalars in give a Python float out. Nonfinite results raise
    :class:`DomainError`.
    """
    scalar = np.ndim(x) == 0
    xs = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(e, xs)
    out = np.broadcast_to(np.asarray(out, dtype=float), xs.shape)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite value of {to_string(e)}")
    return float(out) if scalar else np.array(out)


# -------------------------------------------------- simplifying builders

def const_value(e: Expression) -> float | None:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Num):
        return -e.arg.value
    return None


def num(v: float) -> Expression:
    v = float(v)
    return Neg(Num(-v)) if v < 0 else Num(v)


def neg(a: Expression) -> Expression:
    ca = const_value(a)
    if ca is not None:
        return num(-ca)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expression, b: Expression) -> Expression:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return num(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    if isinstance(b, Neg):
        return Sub(a, b.arg)
    return Add(a, b)


def sub(a: Expression, b: Expression) -> Expression:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return num(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return neg(b)
    if a == b:
        return ZERO
    if isinstance(b, Neg):
        return Add(a, b.arg)
    return Sub(a, b)


def mul(a: Expression, b: Expression) -> Expression:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return num(ca * cb)
    if ca == 0 or cb == 0:
        return ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return neg(b)
    if cb == -1:
        return neg(a)
    if cb is not None:
        a, b, ca, cb = b, a, cb, ca
    if ca is not None and isinstance(b, Mul):
        inner = const_value(b.left)
        if inner is not None:
            return mul(num(ca * inner), b.right)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return mul(a.arg, b.arg)
    if isinstance(a, Neg):
        return neg(mul(a.arg, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.arg))
    return Mul(a, b)


def div(a: Expression, b: Expression) -> Expression:
    ca, cb = const_value(a), const_value(b)
    if ca == 0:
        return ZERO
    if cb == 1:
        return a
    if ca is not None and cb is not None and cb != 0:
        return num(ca / cb)
    if cb is not None and cb != 0:
        return mul(num(1.0 / cb), a) if abs(cb) != 1 else neg(a)
    return Div(a, b)


def power(b: Expression, k: int) -> Expression:
    if k == 0:
        return ONE
    if k == 1:
        return b
    cb = const_value(b)
    if cb is not None and (cb != 0 or k > 0):
        return num(cb ** k)
    if isinstance(b, Pow):
        return power(b.base, b.exponent * k)
    return Pow(b, k)


# -------------------------------------------------------- differentiation

def _d(e: Expression) -> Expression:
    if isinstance(e, (Num,)):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(_d(e.arg))
    if isinstance(e, Add):
        return add(_d(e.left), _d(e.right))
    if isinstance(e, Sub):
        return sub(_d(e.left), _d(e.right))
    if isinstance(e, Mul):
        return add(mul(_d(e.left), e.right), mul(e.left, _d(e.right)))
    if isinstance(e, Div):
        da, db = _d(e.left), _d(e.right)
        if const_value(db) == 0:
            return div(da, e.right)
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, 2))
    if isinstance(e, Pow):
        k = e.exponent
        return mul(mul(num(k), power(e.base, k - 1)), _d(e.base))
    if isinstance(e, Func):
        u, du = e.arg, _d(e.arg)
        if const_value(du) == 0:
            return ZERO
        if e.name == "exp":
            return mul(e, du)
        if e.name == "log":
            return div(du, u)
        if e.name == "sin":
            return mul(Func("cos", u), du)
        if e.name == "cos":
            return neg(mul(Func("sin", u), du))
        return div(du, mul(Num(2.0), e))
    raise TypeError(f"not an expression node: {e!r}")


@lru_cache(maxsize=4096)
def differentiate(e: Expression, order: int = 1) -> Expression:
    """Exact ``order``-th derivative with respect to ``x``; order 0 is ``e``."""
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    if order == 0:
        return e
    return _d(differentiate(e, order - 1))


def as_expression(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float)) and math.isfinite(value):
        return num(value)
    raise TypeError(f"cannot interpret {value!r} as an expression")
