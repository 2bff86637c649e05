"""A small arithmetic expression language with exact partial derivatives.

Expressions are immutable trees.  Evaluation is vectorized: every coordinate in
the assignment may be a float or a numpy array, and the result broadcasts the
usual way.  Besides the parsed node types there is an :class:`Opaque` node that
wraps an arbitrary numeric function of sub-expressions; its partials are taken
by central finite differences in each argument slot and the chain rule is
applied symbolically on top.

Grammar::

    expr  := term (("+"|"-") term)*
    term  := unary (("*"|"/") unary)*
    unary := "-" unary | power
    power := atom ("^" integer)?
    atom  := number | ident | func "(" expr ")" | "(" expr ")"
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Func",
    "Opaque",
    "ParseError",
    "UndeclaredIdentifierError",
    "DomainError",
    "FUNCTIONS",
    "CONSTANTS",
    "parse",
    "evaluate",
    "differentiate",
    "as_expr",
    "const",
    "var",
]

Number = Union[int, float]
Value = Union[float, np.ndarray]

#: Named constants usable anywhere an identifier is allowed.
CONSTANTS = {"pi": math.pi}


class ParseError(ValueError):
    """Malformed expression source; ``offset`` is the 0-based character position."""

    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class UndeclaredIdentifierError(ParseError):
    def __init__(self, name: str, offset: int, source: str = ""):
        self.name = name
        super().__init__(f"undeclared identifier {name!r}", offset, source)


class DomainError(ArithmeticError):
    """Evaluation left the real domain of an operation."""


def _as_array_check(x):
    return np.asarray(x)


def _check_positive(x, fname):
    if np.any(_as_array_check(x) <= 0):
        raise DomainError(f"{fname} of non-positive argument")


def _check_nonneg(x, fname):
    if np.any(_as_array_check(x) < 0):
        raise DomainError(f"{fname} of negative argument")


def _check_nonzero(x, what):
    if np.any(_as_array_check(x) == 0):
        raise DomainError(f"{what} by zero")


def _tan(x):
    if np.any(np.abs(np.cos(x)) < 1e-300):
        raise DomainError("tan at a pole")
    return np.tan(x)


def _log(x):
    _check_positive(x, "log")
    return np.log(x)


def _sqrt(x):
    _check_nonneg(x, "sqrt")
    return np.sqrt(x)


FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": _tan,
    "exp": np.exp,
    "log": _log,
    "sqrt": _sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
}


class Expr:
    """Base class of expression nodes.

    Python arithmetic operators build new trees with a few trivial
    simplifications (multiplying by 0 or 1, adding 0) so that products of
    forms do not grow needless branches.
    """

    __slots__ = ()

    def eval(self, point: Mapping[str, Value]) -> Value:
        raise NotImplementedError

    def diff(self, name: str) -> "Expr":
        raise NotImplementedError

    def subs(self, mapping: Mapping[str, "Expr"]) -> "Expr":
        raise NotImplementedError

    def free_vars(self) -> frozenset[str]:
        raise NotImplementedError

    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0

    def __add__(self, other):
        return _add(self, as_expr(other))

    def __radd__(self, other):
        return _add(as_expr(other), self)

    def __sub__(self, other):
        return _sub(self, as_expr(other))

    def __rsub__(self, other):
        return _sub(as_expr(other), self)

    def __mul__(self, other):
        return _mul(self, as_expr(other))

    def __rmul__(self, other):
        return _mul(as_expr(other), self)

    def __truediv__(self, other):
        return _div(self, as_expr(other))

    def __rtruediv__(self, other):
        return _div(as_expr(other), self)

    def __neg__(self):
        return _neg(self)

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("only integer exponents are supported")
        return _pow(self, int(n))


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float

    def eval(self, point):
        return self.value

    def diff(self, name):
        return ZERO

    def subs(self, mapping):
        return self

    def free_vars(self):
        return frozenset()

    def __str__(self):
        return f"({self.value!r})" if self.value < 0 else repr(self.value)


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str

    def eval(self, point):
        try:
            return point[self.name]
        except KeyError:
            raise KeyError(f"no value for coordinate {self.name!r}") from None

    def diff(self, name):
        return ONE if name == self.name else ZERO

    def subs(self, mapping):
        return mapping.get(self.name, self)

    def free_vars(self):
        return frozenset((self.name,))

    def __str__(self):
        return self.name


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr

    def eval(self, point):
        return -self.arg.eval(point)

    def diff(self, name):
        return -self.arg.diff(name)

    def subs(self, mapping):
        return -self.arg.subs(mapping)

    def free_vars(self):
        return self.arg.free_vars()

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True, slots=True)
class Add(Expr):
    left: Expr
    right: Expr

    def eval(self, point):
        return self.left.eval(point) + self.right.eval(point)

    def diff(self, name):
        return self.left.diff(name) + self.right.diff(name)

    def subs(self, mapping):
        return self.left.subs(mapping) + self.right.subs(mapping)

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()

    def __str__(self):
        return f"({self.left} + {self.right})"


@dataclass(frozen=True, slots=True)
class Sub(Expr):
    left: Expr
    right: Expr

    def eval(self, point):
        return self.left.eval(point) - self.right.eval(point)

    def diff(self, name):
        return self.left.diff(name) - self.right.diff(name)

    def subs(self, mapping):
        return self.left.subs(mapping) - self.right.subs(mapping)

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()

    def __str__(self):
        return f"({self.left} - {self.right})"


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    left: Expr
    right: Expr

    def eval(self, point):
        return self.left.eval(point) * self.right.eval(point)

    def diff(self, name):
        return self.left.diff(name) * self.right + self.left * self.right.diff(name)

    def subs(self, mapping):
        return self.left.subs(mapping) * self.right.subs(mapping)

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()

    def __str__(self):
        return f"({self.left} * {self.right})"


@dataclass(frozen=True, slots=True)
class Div(Expr):
    left: Expr
    right: Expr

    def eval(self, point):
        den = self.right.eval(point)
        _check_nonzero(den, "division")
        return self.left.eval(point) / den

    def diff(self, name):
        num = self.left.diff(name) * self.right - self.left * self.right.diff(name)
        return num / (self.right**2)

    def subs(self, mapping):
        return self.left.subs(mapping) / self.right.subs(mapping)

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()

    def __str__(self):
        return f"({self.left} / {self.right})"


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def eval(self, point):
        b = self.base.eval(point)
        if self.exponent < 0:
            _check_nonzero(b, "division")
            return 1.0 / (np.asarray(b, dtype=float) ** (-self.exponent))
        return b**self.exponent

    def diff(self, name):
        n = self.exponent
        if n == 0:
            return ZERO
        return Const(float(n)) * self.base ** (n - 1) * self.base.diff(name)

    def subs(self, mapping):
        return self.base.subs(mapping) ** self.exponent

    def free_vars(self):
        return self.base.free_vars()

    def __str__(self):
        return f"({self.base}^{self.exponent})"


@dataclass(frozen=True, slots=True)
class Func(Expr):
    name: str
    arg: Expr

    def eval(self, point):
        return FUNCTIONS[self.name](self.arg.eval(point))

    def diff(self, name):
        inner = self.arg.diff(name)
        if inner.is_zero():
            return ZERO
        u = self.arg
        f = self.name
        if f == "sin":
            outer = Func("cos", u)
        elif f == "cos":
            outer = -Func("sin", u)
        elif f == "tan":
            outer = ONE / Func("cos", u) ** 2
        elif f == "exp":
            outer = self
        elif f == "log":
            outer = ONE / u
        elif f == "sqrt":
            outer = ONE / (Const(2.0) * self)
        elif f == "sinh":
            outer = Func("cosh", u)
        elif f == "cosh":
            outer = Func("sinh", u)
        else:  # pragma: no cover - guarded by the parser
            raise ValueError(f"unknown function {f!r}")
        return outer * inner

    def subs(self, mapping):
        return Func(self.name, self.arg.subs(mapping))

    def free_vars(self):
        return self.arg.free_vars()

    def __str__(self):
        return f"{self.name}({self.arg})"


@dataclass(frozen=True, slots=True, eq=False)
class Opaque(Expr):
    """A numeric function ``fn(*args)`` of sub-expressions.

    ``fn`` must accept and return numpy arrays elementwise.  Partials in each
    argument slot use central differences with step ``step * max(1, |a|)``.
    Equality is by identity, since ``fn`` cannot be compared structurally.
    """

    fn: Callable[..., Value]
    args: tuple[Expr, ...]
    label: str = "opaque"
    step: float = 1e-5

    def eval(self, point):
        return self.fn(*(a.eval(point) for a in self.args))

    def slot_partial(self, k: int) -> "Opaque":
        fn, h0 = self.fn, self.step

        def partial(*xs):
            xs = [np.asarray(x, dtype=float) for x in xs]
            h = h0 * np.maximum(1.0, np.abs(xs[k]))
            hi = list(xs)
            lo = list(xs)
            hi[k] = xs[k] + h
            lo[k] = xs[k] - h
            return (fn(*hi) - fn(*lo)) / (2.0 * h)

        return Opaque(partial, self.args, f"d{k}{self.label}", self.step)

    def diff(self, name):
        out = ZERO
        for k, a in enumerate(self.args):
            da = a.diff(name)
            if not da.is_zero():
                out = out + self.slot_partial(k) * da
        return out

    def subs(self, mapping):
        return Opaque(self.fn, tuple(a.subs(mapping) for a in self.args), self.label, self.step)

    def free_vars(self):
        out = frozenset()
        for a in self.args:
            out |= a.free_vars()
        return out

    def __str__(self):
        return f"{self.label}({', '.join(map(str, self.args))})"


ZERO = Const(0.0)
ONE = Const(1.0)


def const(x: Number) -> Const:
    return Const(float(x))


def var(name: str) -> Var:
    return Var(name)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _add(a: Expr, b: Expr) -> Expr:
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if b.is_zero():
        return a
    if a.is_zero():
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Sub(a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Expr, b: Expr) -> Expr:
    if a.is_zero() or b.is_zero():
        return ZERO
    if isinstance(a, Const) and a.value == 1:
        return b
    if isinstance(b, Const) and b.value == 1:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const) and b.value == 1:
        return a
    if a.is_zero() and not b.is_zero():
        return ZERO
    return Div(a, b)


def _pow(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
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
            raise ParseError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str, coordinates: Iterable[str]):
        self.source = source
        self.coords = set(coordinates)
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        what = "end of input" if tok[0] == "end" else repr(tok[1])
        return ParseError(f"{message}, found {what}", tok[2], self.source)

    def expect(self, value):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != value:
            raise self.error(f"expected {value!r}")
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token")
        return e

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            right = self.term()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def term(self):
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            right = self.unary()
            left = Mul(left, right) if op == "*" else Div(left, right)
        return left

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            exp = self.peek()
            if exp[0] != "num" or not exp[1].isdigit():
                raise self.error("exponent must be an integer literal")
            self.advance()
            return Pow(base, int(exp[1]))
        return base

    def atom(self):
        tok = self.peek()
        kind, text, pos = tok
        if kind == "num":
            self.advance()
            return Const(float(text))
        if kind == "ident":
            self.advance()
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            if text in self.coords:
                return Var(text)
            if text in CONSTANTS:
                return Const(CONSTANTS[text])
            raise UndeclaredIdentifierError(text, pos, self.source)
        if kind == "op" and text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        raise self.error("expected a number, identifier or '('")


def parse(source: str, coordinates: Sequence[str]) -> Expr:
    """Parse ``source`` into an expression over the declared ``coordinates``.

    Identifiers must be coordinates, function names, or entries of
    :data:`CONSTANTS`; coordinates shadow constants.
    """
    if not source or not source.strip():
        raise ParseError("empty expression", 0, source)
    return _Parser(source, coordinates).parse()


def evaluate(e: Expr, point: Mapping[str, Value] | None = None, **coords: Value) -> Value:
    """Evaluate ``e`` at a coordinate assignment; non-finite results raise."""
    values = dict(point or {})
    values.update(coords)
    with np.errstate(divide="raise", invalid="raise", over="ignore", under="ignore"):
        try:
            out = e.eval(values)
        except FloatingPointError as exc:
            raise DomainError(str(exc)) from None
    if not np.all(np.isfinite(out)):
        raise DomainError("non-finite result")
    return out


def differentiate(e: Expr | str, coordinate: str, coordinates: Sequence[str] | None = None) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``coordinate``."""
    if isinstance(e, str):
        if coordinates is None:
            raise TypeError("coordinates are required when differentiating source text")
        e = parse(e, coordinates)
    if coordinates is not None and coordinate not in coordinates:
        raise UndeclaredIdentifierError(coordinate, 0)
    return e.diff(coordinate)
