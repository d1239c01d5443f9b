"""Scalar fields on R^n: parsing, evaluation, jets and symbolic derivatives.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := number | name | name '(' expr ')' | '(' expr ')'

Names are ``x1..xn``; when ``n = 2m`` the phase-space aliases ``q1..qm`` and
``p1..pm`` map to indices ``0..m-1`` and ``m..2m-1``.  ``pi`` and ``e`` are
constants.  Functions: sin, cos, exp, log, sqrt, tanh (one argument each).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import jets
from .jets import Jet

__all__ = [
    "ExprError",
    "NumericDomainError",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "ScalarExpr",
    "parse",
    "eval",
    "eval_jet",
    "evaluate",
    "derivative",
    "compile_floats",
]

UNARY_OPS = ("neg", "sin", "cos", "exp", "log", "sqrt", "tanh")
BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}
_SYMBOL = {v: k for k, v in BINARY_OPS.items()}
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprError(ValueError):
    """Syntax error, unknown identifier or wrong arity; ``pos`` is 0-based."""

    def __init__(self, message: str, pos: int | None = None, text: str | None = None):
        self.pos = pos
        self.text = text
        self.reason = message
        if pos is not None:
            message = f"{message} (at column {pos + 1})"
        super().__init__(message)


class NumericDomainError(ArithmeticError):
    """Evaluation produced a non-finite number (log of <= 0, 1/0, ...)."""


# -- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


def default_names(n: int) -> dict[str, int]:
    names = {f"x{i + 1}": i for i in range(n)}
    if n % 2 == 0:
        m = n // 2
        for i in range(m):
            names[f"q{i + 1}"] = i
            names[f"p{i + 1}"] = m + i
    return names


@dataclass(frozen=True)
class ScalarExpr:
    """A parsed scalar field on R^n."""

    root: object
    n: int
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{i + 1}" for i in range(self.n)))

    def __str__(self) -> str:
        return to_string(self.root, self.names)

    def __call__(self, x):
        return eval(self, x)

    @property
    def is_constant(self) -> bool:
        return not _has_var(self.root)

    def derivative(self, a: int) -> "ScalarExpr":
        return ScalarExpr(derivative(self.root, a), self.n, self.names)


def _has_var(node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Unary):
        return _has_var(node.arg)
    if isinstance(node, Binary):
        return _has_var(node.left) or _has_var(node.right)
    return False


# -- parser -------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, lookup: dict[str, int]):
        self.text = text
        self.lookup = lookup
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected token {val!r}", pos, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(BINARY_OPS[op], node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(BINARY_OPS[op], node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Binary("pow", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if val not in UNARY_OPS or val == "neg":
                    raise ExprError(f"unknown function {val!r}", pos, self.text)
                self.take()
                if self.peek()[:2] == ("op", ")"):
                    raise ExprError(f"{val}() takes exactly one argument, got 0", pos, self.text)
                arg = self.expr()
                if self.peek()[:2] == ("op", ","):
                    raise ExprError(f"{val}() takes exactly one argument", pos, self.text)
                self.expect(")")
                return Unary(val, arg)
            if val in UNARY_OPS:
                raise ExprError(f"function {val!r} needs an argument", pos, self.text)
            if val in self.lookup:
                return Var(self.lookup[val])
            if val in CONSTANTS:
                return Const(CONSTANTS[val])
            raise ExprError(f"unknown identifier {val!r}", pos, self.text)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprError(f"unexpected {found}", pos, self.text)


def parse(text: str, n: int, names: Sequence[str] | None = None) -> ScalarExpr:
    """Parse ``text`` into a scalar field on R^n."""
    if not text or not text.strip():
        raise ExprError("empty expression", 0, text)
    lookup = default_names(n)
    if names is not None:
        names = tuple(names)
        if len(names) != n:
            raise ValueError(f"expected {n} variable names, got {len(names)}")
        if len(set(names)) != n:
            raise ValueError(f"variable names must be distinct: {names}")
        lookup.update({name: i for i, name in enumerate(names)})
    root = _Parser(text, lookup).parse()
    return ScalarExpr(root, n, names or ())


# -- printing -----------------------------------------------------------------


def to_string(node, names: Sequence[str]) -> str:
    if isinstance(node, Const):
        s = repr(float(node.value))
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Var):
        return names[node.index]
    if isinstance(node, Unary):
        inner = to_string(node.arg, names)
        return f"(-{inner})" if node.op == "neg" else f"{node.op}({inner})"
    return f"({to_string(node.left, names)} {_SYMBOL[node.op]} {to_string(node.right, names)})"


# -- evaluation ---------------------------------------------------------------

_FUNCS = {
    "sin": jets.sin,
    "cos": jets.cos,
    "exp": jets.exp,
    "log": jets.log,
    "sqrt": jets.sqrt,
    "tanh": jets.tanh,
}


def evaluate(node, variables: Sequence):
    """Evaluate an AST over any numeric carrier (floats, arrays or jets).

    Non-finite results are returned as-is; callers decide whether to raise.
    """
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return variables[node.index]
    if isinstance(node, Unary):
        arg = evaluate(node.arg, variables)
        if node.op == "neg":
            return -arg
        return _FUNCS[node.op](arg)
    left = evaluate(node.left, variables)
    op = node.op
    if op == "pow":
        if not _has_var(node.right):
            return jets.power(left, evaluate(node.right, variables))
        right = evaluate(node.right, variables)
        return jets.exp(right * jets.log(left))
    right = evaluate(node.right, variables)
    if op == "add":
        return left + right
    if op == "sub":
        return left - right
    if op == "mul":
        return left * right
    if isinstance(right, (int, float)) and right == 0:
        return left * math.nan
    return left / right


def _points(f: ScalarExpr, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (f.n,):
        raise ValueError(f"point dimension {x.shape[-1:]} does not match field dimension {f.n}")
    return x


def _check_finite(arr, what: str):
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError(f"non-finite {what} (domain error)")


def eval(f: ScalarExpr, x):  # noqa: A001 - mirrors the operation name
    """Value of ``f`` at ``x`` (a point or a batch of points, last axis n)."""
    x = _points(f, x)
    with np.errstate(all="ignore"):
        out = evaluate(f.root, [x[..., a] for a in range(f.n)])
    out = np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1])
    _check_finite(out, "value")
    return float(out) if out.ndim == 0 else out.copy()


def eval_jet(f: ScalarExpr, x, order: int = 1) -> Jet:
    """Jet of ``f`` at ``x`` carrying every partial derivative up to ``order``."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    x = _points(f, x)
    with np.errstate(all="ignore"):
        out = evaluate(f.root, [jets.variable(x[..., a], a, f.n, order) for a in range(f.n)])
    if not isinstance(out, Jet):
        out = jets.constant(np.broadcast_to(float(out), x.shape[:-1]), f.n, order)
    for block in leaves(out):
        _check_finite(block, "jet entry")
    return out


def leaves(j):
    """Every plain array stored inside a (nested) jet."""
    if isinstance(j, Jet):
        yield from leaves(j.v)
        yield from leaves(j.g)
    else:
        yield np.asarray(j)


# -- symbolic derivative (fast float path for the integrator) ------------------

_ZERO = Const(0.0)
_ONE = Const(1.0)


def _add(a, b):
    if a == _ZERO:
        return b
    if b == _ZERO:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("add", a, b)


def _sub(a, b):
    if b == _ZERO:
        return a
    if a == _ZERO:
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Binary("sub", a, b)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    return Unary("neg", a)


def _mul(a, b):
    if a == _ZERO or b == _ZERO:
        return _ZERO
    if a == _ONE:
        return b
    if b == _ONE:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Binary("mul", a, b)


def _div(a, b):
    if a == _ZERO:
        return _ZERO
    if b == _ONE:
        return a
    return Binary("div", a, b)


def derivative(node, a: int):
    """Symbolic partial derivative of an AST along coordinate ``a``."""
    if isinstance(node, Const):
        return _ZERO
    if isinstance(node, Var):
        return _ONE if node.index == a else _ZERO
    if isinstance(node, Unary):
        u = node.arg
        du = derivative(u, a)
        if du == _ZERO:
            return _ZERO
        op = node.op
        if op == "neg":
            return _neg(du)
        if op == "sin":
            return _mul(Unary("cos", u), du)
        if op == "cos":
            return _neg(_mul(Unary("sin", u), du))
        if op == "exp":
            return _mul(node, du)
        if op == "log":
            return _div(du, u)
        if op == "sqrt":
            return _div(du, _mul(Const(2.0), node))
        if op == "tanh":
            return _mul(_sub(_ONE, Binary("pow", node, Const(2.0))), du)
        raise AssertionError(op)
    u, v = node.left, node.right
    du, dv = derivative(u, a), derivative(v, a)
    op = node.op
    if op == "add":
        return _add(du, dv)
    if op == "sub":
        return _sub(du, dv)
    if op == "mul":
        return _add(_mul(du, v), _mul(u, dv))
    if op == "div":
        return _sub(_div(du, v), _div(_mul(u, dv), Binary("pow", v, Const(2.0))))
    if not _has_var(v):
        c = evaluate(v, [])
        if c == 0.0:
            return _ZERO
        lowered = _ONE if c == 1.0 else Binary("pow", u, Const(c - 1.0))
        return _mul(_mul(Const(c), lowered), du)
    # u^v = exp(v log u)
    return _mul(node, _add(_mul(dv, Unary("log", u)), _div(_mul(v, du), u)))


def _fpow(a: float, c: float) -> float:
    return math.pow(a, c)


_MATH = {"sin": "_m.sin", "cos": "_m.cos", "exp": "_m.exp", "log": "_m.log", "sqrt": "_m.sqrt", "tanh": "_m.tanh"}


def _source(node) -> str:
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Unary):
        inner = _source(node.arg)
        return f"(-{inner})" if node.op == "neg" else f"{_MATH[node.op]}({inner})"
    left, right = _source(node.left), _source(node.right)
    if node.op == "pow":
        if isinstance(node.right, Const) and node.right.value == 2.0:
            return f"({left}*{left})"
        return f"_pow({left}, {right})"
    return f"({left} {_SYMBOL[node.op]} {right})"


def compile_floats(exprs: Sequence[ScalarExpr], n: int):
    """Compile several fields into one function ``x -> tuple of floats``.

    Uses :mod:`math` on Python floats; domain failures raise
    :class:`NumericDomainError`.
    """
    args = ", ".join(f"x{i}" for i in range(n)) + ("," if n == 1 else "")
    body = ", ".join(_source(e.root if isinstance(e, ScalarExpr) else e) for e in exprs)
    src = f"def _f(x):\n    {args} = x\n    return ({body}{',' if len(exprs) == 1 else ''})\n"
    scope = {"_m": math, "_pow": _fpow}
    exec(compile(src, "<gchs-compiled>", "exec"), scope)
    raw = scope["_f"]

    def fn(x):
        try:
            return raw(x)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise NumericDomainError(str(exc)) from exc

    return fn
