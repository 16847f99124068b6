"""Expressions in ``t``, ``x`` and ``u``: parsing, evaluation, differentiation.

Grammar (whitespace is ignored)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?            # right-associative
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are the variables ``t``, ``x``, ``u`` and the functions ``sin``,
``cos``, ``exp``, ``ln``, ``sqrt``, ``abs``, ``gamma``. ``**`` is accepted as
a synonym for ``^``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fracops

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "Bin",
    "Call",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ExprDomainError",
    "VARIABLES",
    "FUNCTIONS",
    "parse_expr",
    "eval_expr",
    "diff_expr",
    "compile_expr",
]

VARIABLES = ("t", "x", "u")
FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "abs", "gamma")


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        super().__init__(f"{message} at offset {position}")
        self.message = message
        self.position = position
        self.text = text


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ExprDomainError(ArithmeticError):
    """Evaluation left the domain of an operation (or produced a non-finite value)."""

    def __init__(self, message: str, node: "Expr | None" = None):
        where = f" in '{node}'" if node is not None else ""
        super().__init__(f"{message}{where}")
        self.node = node


# --------------------------------------------------------------------------
# AST


class Expr:
    """Base class of expression nodes. Nodes are immutable and hashable."""

    __slots__ = ()

    def __str__(self) -> str:
        return _fmt(self)

    def variables(self) -> frozenset[str]:
        if isinstance(self, Var):
            return frozenset((self.name,))
        return frozenset().union(*(c.variables() for c in _children(self)))

    def __call__(self, t=0.0, x=0.0, u=0.0) -> float:
        return eval_expr(self, t, x, u)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Bin(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr



def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Neg):
        return (e.arg,)
    if isinstance(e, Bin):
        return (e.left, e.right)
    if isinstance(e, Call):
        return (e.arg,)
    return ()


# --------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if value == "**":
                value = "^"
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, v, pos = self.advance()
        if v != value or kind == "end":
            found = "end of input" if kind == "end" else repr(v)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Expr:
        e = self.expr()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {v!r}", pos, self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            e = Bin(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            e = Bin(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.advance()
            return Neg(self.unary())
        if self.peek()[1] == "+" and self.peek()[0] == "op":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            self.advance()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, v, pos = self.advance()
        if kind == "num":
            return Num(float(v))
        if kind == "name":
            if v in VARIABLES:
                return Var(v)
            if v in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(v, arg)
            raise UnknownIdentifierError(f"unknown identifier {v!r}", pos, self.text)
        if v == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(v)
        raise ExprSyntaxError(f"unexpected {found}", pos, self.text)


def parse_expr(text: str) -> Expr:
    """Parse *text* into an expression tree.

    >>> str(parse_expr("(u^2 - 4*x)^2"))
    '(u ^ 2.0 - 4.0 * x) ^ 2.0'
    """
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# Printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    if isinstance(e, Num) and math.copysign(1.0, e.value) < 0:
        return _PREC["neg"]
    return 5


def _wrap(e: Expr, cond: bool) -> str:
    s = _fmt(e)
    return f"({s})" if cond else s


def _fmt(e: Expr) -> str:
    if isinstance(e, Num):
        v = e.value
        if not math.isfinite(v):
            raise ValueError(f"cannot print non-finite literal {v!r}")
        return f"-{-v!r}" if math.copysign(1.0, v) < 0 else repr(v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({_fmt(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _prec(e.arg) < _PREC["neg"])
    p = _PREC[e.op]
    if e.op == "^":
        left = _wrap(e.left, _prec(e.left) <= p)
        right = _wrap(e.right, _prec(e.right) < _PREC["neg"])
    else:
        left = _wrap(e.left, _prec(e.left) < p)
        right = _wrap(e.right, _prec(e.right) <= p)
    return f"{left} {e.op} {right}"


# --------------------------------------------------------------------------
# Evaluation


def _check(v: float, node: Expr) -> float:
    if not math.isfinite(v):
        raise ExprDomainError("non-finite value", node)
    return v


def _eval(e: Expr, env: dict[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Bin):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        op = e.op
        if op == "+":
            return _check(a + b, e)
        if op == "-":
            return _check(a - b, e)
        if op == "*":
            return _check(a * b, e)
        if op == "/":
            if b == 0.0:
                raise ExprDomainError("division by zero", e)
            return _check(a / b, e)
        if a == 0.0 and b < 0.0:
            raise ExprDomainError("zero raised to a negative power", e)
        if a < 0.0 and b != math.floor(b):
            raise ExprDomainError("negative base with non-integer exponent", e)
        try:
            return _check(math.pow(a, b), e)
        except OverflowError:
            raise ExprDomainError("overflow", e) from None
    if isinstance(e, Call):
        a = _eval(e.arg, env)
        fn = e.fn
        if fn == "ln":
            if a <= 0.0:
                raise ExprDomainError("logarithm of a non-positive number", e)
            return math.log(a)
        if fn == "sqrt":
            if a < 0.0:
                raise ExprDomainError("square root of a negative number", e)
            return math.sqrt(a)
        if fn == "abs":
            return abs(a)
        if fn == "sign":
            # only produced by differentiating abs
            return float((a > 0.0) - (a < 0.0))
        if fn == "sin":
            return math.sin(a)
        if fn == "cos":
            return math.cos(a)
        if fn == "exp":
            try:
                return math.exp(a)
            except OverflowError:
                raise ExprDomainError("overflow", e) from None
        if fn == "gamma":
            try:
                return _check(fracops.gamma(a), e)
            except (fracops.PoleError, OverflowError):
                raise ExprDomainError("gamma at a pole or overflow", e) from None
    raise TypeError(f"unsupported node {e!r}")


def eval_expr(e: Expr, t: float = 0.0, x: float = 0.0, u: float = 0.0) -> float:
    """Evaluate *e* at a point by direct recursion over the tree.

    :raises ExprDomainError: on division by zero, logarithm or square root
        outside the domain, gamma poles, or any non-finite intermediate.
    """
    return float(_eval(e, {"t": float(t), "x": float(x), "u": float(u)}))


# --------------------------------------------------------------------------
# Simplifying constructors and differentiation


def _num(v: float) -> Num:
    return Num(float(v))


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return _num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value + b.value)
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return Bin("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value - b.value)
    return Bin("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) or _is(b, 0.0):
        return _num(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value * b.value)
    if isinstance(a, Neg):
        return neg(mul(a.arg, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.arg))
    return Bin("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return _num(0.0)
    return Bin("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return _num(1.0)
    return Bin("^", a, b)


def call(fn: str, a: Expr) -> Expr:
    return Call(fn, a)


def _d(e: Expr, var: str) -> Expr:
    if isinstance(e, Num):
        return _num(0.0)
    if isinstance(e, Var):
        return _num(1.0 if e.name == var else 0.0)
    if var not in e.variables():
        return _num(0.0)
    if isinstance(e, Neg):
        return neg(_d(e.arg, var))
    if isinstance(e, Bin):
        f, g = e.left, e.right
        df, dg = _d(f, var), _d(g, var)
        if e.op == "+":
            return add(df, dg)
        if e.op == "-":
            return sub(df, dg)
        if e.op == "*":
            return add(mul(df, g), mul(f, dg))
        if e.op == "/":
            return div(sub(mul(df, g), mul(f, dg)), power(g, _num(2.0)))
        # f ^ g
        if var not in g.variables():
            # g f^(g-1) f', valid for negative f with integer g as well
            return mul(mul(g, power(f, sub(g, _num(1.0)))), df)
        # f^g (g' ln f + g f'/f)
        return mul(e, add(mul(dg, call("ln", f)), div(mul(g, df), f)))
    if isinstance(e, Call):
        a = e.arg
        da = _d(a, var)
        fn = e.fn
        if fn == "sin":
            inner = call("cos", a)
        elif fn == "cos":
            inner = neg(call("sin", a))
        elif fn == "exp":
            inner = e
        elif fn == "ln":
            inner = div(_num(1.0), a)
        elif fn == "sqrt":
            inner = div(_num(0.5), e)
        elif fn == "abs":
            # sign(a) written as a/|a| would fail at 0; use the dedicated node
            inner = Call("sign", a)
        elif fn == "gamma":
            raise NotImplementedError("derivative of gamma of a variable argument is not supported")
        else:
            raise TypeError(f"unsupported function {fn!r}")
        return mul(inner, da)
    raise TypeError(f"unsupported node {e!r}")


def diff_expr(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative of *e* with respect to ``x`` or ``u``.

    ``abs`` is differentiated with subgradient 0 at the kink. ``t`` is also
    accepted as *var*.
    """
    if var not in VARIABLES:
        raise ValueError(f"cannot differentiate with respect to {var!r}")
    return _d(e, var)


# --------------------------------------------------------------------------
# Compilation to vectorised callables


def _gamma_vec(a):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        return fracops.gamma(float(arr))
    return np.vectorize(fracops.gamma, otypes=[float])(arr)


def _pow(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((a < 0.0) & (b != np.floor(b))):
        raise FloatingPointError("negative base with non-integer exponent")
    return np.power(a, b)


def _div(a, b):
    if np.any(np.asarray(b) == 0.0):
        raise FloatingPointError("division by zero")
    return np.divide(a, b)


def _log(a):
    if np.any(np.asarray(a) <= 0.0):
        raise FloatingPointError("logarithm of a non-positive number")
    return np.log(a)


def _sqrt(a):
    if np.any(np.asarray(a) < 0.0):
        raise FloatingPointError("square root of a negative number")
    return np.sqrt(a)


_NS = {
    "_pow": _pow,
    "_div": _div,
    "_log": _log,
    "_sqrt": _sqrt,
    "_gamma": _gamma_vec,
    "_sin": np.sin,
    "_cos": np.cos,
    "_exp": np.exp,
    "_abs": np.abs,
    "_sign": np.sign,
}
_FN_NAMES = {
    "sin": "_sin",
    "cos": "_cos",
    "exp": "_exp",
    "ln": "_log",
    "sqrt": "_sqrt",
    "abs": "_abs",
    "gamma": "_gamma",
    "sign": "_sign",
}


def _fold(e: Expr) -> Expr:
    """Replace variable-free subtrees by their value."""
    if not e.variables() and not isinstance(e, Num):
        try:
            return _num(_eval(e, {}))
        except ExprDomainError:
            return e
    if isinstance(e, Neg):
        return Neg(_fold(e.arg))
    if isinstance(e, Bin):
        return Bin(e.op, _fold(e.left), _fold(e.right))
    if isinstance(e, Call):
        return Call(e.fn, _fold(e.arg))
    return e


def _src(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_src(e.arg)})"
    if isinstance(e, Call):
        return f"{_FN_NAMES[e.fn]}({_src(e.arg)})"
    a, b = _src(e.left), _src(e.right)
    if e.op == "/":
        return f"_div({a}, {b})"
    if e.op == "^":
        return f"_pow({a}, {b})"
    return f"({a} {e.op} {b})"


def _pow_s(a, b):
    if a < 0.0 and b != math.floor(b):
        raise ValueError("negative base with non-integer exponent")
    if a == 0.0 and b < 0.0:
        raise ValueError("zero raised to a negative power")
    return math.pow(a, b)


def _div_s(a, b):
    if b == 0.0:
        raise ValueError("division by zero")
    return a / b


def _log_s(a):
    if a <= 0.0:
        raise ValueError("logarithm of a non-positive number")
    return math.log(a)


def _sqrt_s(a):
    if a < 0.0:
        raise ValueError("square root of a negative number")
    return math.sqrt(a)


_NS_SCALAR = {
    "_pow": _pow_s,
    "_div": _div_s,
    "_log": _log_s,
    "_sqrt": _sqrt_s,
    "_gamma": fracops.gamma,
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_abs": abs,
    "_sign": lambda a: float((a > 0.0) - (a < 0.0)),
}
_SCALAR_ERRORS = (ValueError, OverflowError, ZeroDivisionError, fracops.PoleError)


def compile_expr(e: Expr) -> Callable:
    """Compile *e* into ``f(t, x, u)`` accepting scalars or broadcastable arrays.

    Constant subtrees are folded first. Domain violations and non-finite
    results raise :class:`ExprDomainError`, as in :func:`eval_expr`. The
    returned callable carries a ``scalar`` attribute: a faster variant for
    plain floats, used inside time-stepping loops.
    """
    folded = _fold(e)
    src = f"lambda t, x, u: {_src(folded)}"
    raw = eval(compile(src, f"<expr {e}>", "eval"), dict(_NS))
    raw_s = eval(compile(src, f"<expr {e}>", "eval"), dict(_NS_SCALAR))

    def scalar(t, x, u):
        try:
            out = raw_s(float(t), float(x), float(u))
        except _SCALAR_ERRORS as exc:
            raise ExprDomainError(str(exc), e) from None
        if not math.isfinite(out):
            raise ExprDomainError("non-finite value", e)
        return float(out)

    def func(t, x, u):
        if isinstance(t, (float, int)) and isinstance(x, (float, int)) and isinstance(u, (float, int)):
            return scalar(t, x, u)
        with np.errstate(all="raise"):
            try:
                out = raw(t, x, u)
            except (FloatingPointError, ZeroDivisionError, fracops.PoleError) as exc:
                raise ExprDomainError(str(exc), e) from None
        if not np.all(np.isfinite(out)):
            raise ExprDomainError("non-finite value", e)
        if np.ndim(out) == 0 and np.ndim(t) == 0 and np.ndim(x) == 0 and np.ndim(u) == 0:
            return float(out)
        return np.broadcast_to(out, np.broadcast(t, x, u).shape).astype(float)

    func.expr = e
    func.scalar = scalar
    return func
