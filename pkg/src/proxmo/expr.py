"""Scalar expressions in ``x1..xn`` with forward-mode differentiation.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ["-"] atom ["^" integer]
    atom   := number | ident | func "(" expr ")" | "(" expr ")"
    func   := ln | sqrt | exp | sin | cos | abs
    ident  := "x" integer          (1-based)

A parsed :class:`Expression` is immutable. Evaluation compiles the tree once
into nested closures, so repeated calls from the solver stay cheap.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "ExpressionError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "VariableIndexError",
    "DomainError",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "Expression",
    "DualVector",
    "parse",
    "eval_grad",
    "fd_check",
    "FUNCTIONS",
]

FUNCTIONS = ("ln", "sqrt", "exp", "sin", "cos", "abs")


class ExpressionError(ValueError):
    """Base class for all expression errors."""


class ExprSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class VariableIndexError(ExprSyntaxError):
    pass


class DomainError(ExpressionError):
    """Evaluation left the real domain of some node (ln, sqrt, division)."""

    def __init__(self, message: str, node: "Node"):
        super().__init__(f"{message} in {to_string(node)}")
        self.node = node


# --------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Const, Var, Neg, BinOp, Pow, Call]


def to_string(node: Node) -> str:
    """Fully parenthesised text that parses back to an equivalent tree."""
    if isinstance(node, Const):
        text = repr(float(node.value))
        return f"(-{text[1:]})" if text.startswith("-") else text
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_string(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    if isinstance(node, Pow):
        return f"({to_string(node.base)}^{node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def _walk(node: Node):
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        if isinstance(cur, (Neg, Call)):
            stack.append(cur.arg)
        elif isinstance(cur, BinOp):
            stack.extend((cur.left, cur.right))
        elif isinstance(cur, Pow):
            stack.append(cur.base)


# --------------------------------------------------------------------------
# tokenizer / recursive-descent parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)
_VAR_RE = re.compile(r"x(\d+)\Z")


@dataclass
class _Token:
    kind: str
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {text[pos]!r}", len(text[:pos].encode())
            )
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), len(text[:pos].encode())))
        pos = m.end()
    tokens.append(_Token("end", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text: str, nvars: int):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.nvars = nvars

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.pos += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            found = self.tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", self.tok.offset)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        negate = self._accept("-")
        node = self.atom()
        if self._accept("^"):
            if self.tok.kind != "number" or not self.tok.text.isdigit():
                raise ExprSyntaxError("exponent must be a non-negative integer", self.tok.offset)
            node = Pow(node, int(self.tok.text))
            self.pos += 1
        return Neg(node) if negate else node

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            self.pos += 1
            return Const(float(tok.text))
        if tok.kind == "ident":
            self.pos += 1
            if tok.text in FUNCTIONS:
                self._expect("(")
                arg = self.expr()
                self._expect(")")
                return Call(tok.text, arg)
            m = _VAR_RE.match(tok.text)
            if m is None:
                raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.offset)
            index = int(m.group(1))
            if not 1 <= index <= self.nvars:
                raise VariableIndexError(
                    f"variable {tok.text} out of range 1..{self.nvars}", tok.offset
                )
            return Var(index)
        if self._accept("("):
            node = self.expr()
            self._expect(")")
            return node
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", tok.offset)


# --------------------------------------------------------------------------
# dual numbers


class DualVector:
    """Value plus dense gradient, propagated by forward-mode arithmetic."""

    __slots__ = ("value", "partials")

    def __init__(self, value: float, partials: np.ndarray):
        self.value = value
        self.partials = partials

    def __repr__(self):
        return f"DualVector(value={self.value!r}, partials={self.partials!r})"


def _check(value: float, node: Node) -> float:
    if not math.isfinite(value):
        raise DomainError("non-finite result", node)
    return value


def _compile_dual(node: Node, nvars: int) -> Callable[[np.ndarray], DualVector]:
    if isinstance(node, Const):
        c = float(node.value)
        zero = np.zeros(nvars)
        return lambda x: DualVector(c, zero)
    if isinstance(node, Var):
        i = node.index - 1
        unit = np.zeros(nvars)
        unit[i] = 1.0
        return lambda x: DualVector(float(x[i]), unit)
    if isinstance(node, Neg):
        f = _compile_dual(node.arg, nvars)

        def neg(x):
            a = f(x)
            return DualVector(-a.value, -a.partials)

        return neg
    if isinstance(node, BinOp):
        fl = _compile_dual(node.left, nvars)
        fr = _compile_dual(node.right, nvars)
        op = node.op
        if op == "+":
            return lambda x: _add(fl(x), fr(x))
        if op == "-":
            return lambda x: _sub(fl(x), fr(x))
        if op == "*":
            return lambda x: _mul(fl(x), fr(x))

        def div(x):
            a, b = fl(x), fr(x)
            if b.value == 0.0:
                raise DomainError("division by zero", node)
            q = a.value / b.value
            return DualVector(_check(q, node), (a.partials - q * b.partials) / b.value)

        return div
    if isinstance(node, Pow):
        fb = _compile_dual(node.base, nvars)
        k = node.exponent

        def power(x):
            a = fb(x)
            if k == 0:
                return DualVector(1.0, np.zeros(nvars))
            value = _check(a.value**k, node)
            return DualVector(value, (k * a.value ** (k - 1)) * a.partials)

        return power
    if isinstance(node, Call):
        fa = _compile_dual(node.arg, nvars)
        rule = _DUAL_RULES[node.func]
        return lambda x: rule(fa(x), node)
    raise TypeError(f"not an expression node: {node!r}")


def _add(a, b):
    return DualVector(a.value + b.value, a.partials + b.partials)


def _sub(a, b):
    return DualVector(a.value - b.value, a.partials - b.partials)


def _mul(a, b):
    return DualVector(a.value * b.value, a.value * b.partials + b.value * a.partials)


def _ln(a, node):
    if a.value <= 0.0:
        raise DomainError(f"ln of non-positive value {a.value!r}", node)
    return DualVector(math.log(a.value), a.partials / a.value)


def _sqrt(a, node):
    if a.value <= 0.0:
        raise DomainError(f"sqrt of non-positive value {a.value!r}", node)
    r = math.sqrt(a.value)
    return DualVector(r, a.partials / (2.0 * r))


def _exp(a, node):
    try:
        v = math.exp(a.value)
    except OverflowError:
        raise DomainError("exp overflow", node) from None
    return DualVector(v, v * a.partials)


def _sin(a, node):
    return DualVector(math.sin(a.value), math.cos(a.value) * a.partials)


def _cos(a, node):
    return DualVector(math.cos(a.value), -math.sin(a.value) * a.partials)


def _abs(a, node):
    # derivative 0 at the kink, matching the symmetric difference quotient
    s = (a.value > 0) - (a.value < 0)
    return DualVector(abs(a.value), s * a.partials)


_DUAL_RULES = {"ln": _ln, "sqrt": _sqrt, "exp": _exp, "sin": _sin, "cos": _cos, "abs": _abs}


# --------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class Expression:
    """Immutable parsed expression of ``nvars`` variables."""

    root: Node
    nvars: int
    source: str = ""
    _dual: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.nvars < 1:
            raise ValueError("nvars must be positive")
        for node in _walk(self.root):
            if isinstance(node, Var) and not 1 <= node.index <= self.nvars:
                raise VariableIndexError(f"variable x{node.index} out of range", 0)
        object.__setattr__(self, "_dual", _compile_dual(self.root, self.nvars))

    def __call__(self, x) -> float:
        return self.eval_grad(x).value

    def eval_grad(self, x) -> DualVector:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.nvars:
            raise ValueError(f"expected {self.nvars} coordinates, got {x.shape[0]}")
        out = self._dual(x)
        if not math.isfinite(out.value) or not np.all(np.isfinite(out.partials)):
            raise DomainError("non-finite result", self.root)
        return DualVector(out.value, np.array(out.partials, dtype=float, copy=True))

    def uses(self, func: str) -> bool:
        return any(isinstance(n, Call) and n.func == func for n in _walk(self.root))

    def __str__(self):
        return to_string(self.root)


def parse(text: str, nvars: int) -> Expression:
    """Parse ``text`` into an :class:`Expression` over ``x1..x{nvars}``."""
    if nvars < 1:
        raise ValueError("nvars must be positive")
    return Expression(_Parser(text, nvars).parse(), nvars, text)


def eval_grad(e: Expression, x) -> DualVector:
    return e.eval_grad(x)


def fd_check(e: Expression, x, h: float = 1e-6, floor: float = 1.0) -> float:
    """Largest per-coordinate discrepancy between AD and central differences.

    The error for coordinate ``i`` is ``|ad_i - fd_i| / max(|ad_i|, floor)``:
    relative for large gradients, absolute below ``floor``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    ad = e.eval_grad(x).partials
    worst = 0.0
    for i in range(e.nvars):
        step = np.zeros_like(x)
        step[i] = h
        fd = (e(x + step) - e(x - step)) / (2.0 * h)
        worst = max(worst, abs(ad[i] - fd) / max(abs(ad[i]), floor))
    return worst
