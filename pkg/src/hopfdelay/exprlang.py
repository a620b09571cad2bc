"""A small arithmetic expression language for coefficient fields.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?          # right-associative
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Variables are ``x`` and ``y``; ``pi`` and ``e`` are constants.  Evaluation is
vectorized: ``x`` and ``y`` may be numpy arrays.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ExprSyntaxError

__all__ = ["Num", "Var", "Unary", "Binary", "Call", "parse", "evaluate", "to_source", "compile_expr"]

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("x", "y")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Unary, Binary, Call]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos, src)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, expected):
        kind, text, pos = self.peek()
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"expected {expected}, found {found}", pos, self.src)

    def expect(self, text):
        if self.peek()[1] != text or self.peek()[0] != "op":
            self.error(repr(text))
        self.advance()

    def parse(self):
        if self.peek()[0] == "end":
            raise ExprSyntaxError("empty expression", 0, self.src)
        node = self.expr()
        if self.peek()[0] != "end":
            self.error("operator or end of input")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text in "+-":
            self.advance()
            operand = self.unary()
            return Unary(text, operand)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Num(CONSTANTS[text])
            raise ExprSyntaxError(f"unknown identifier {text!r}", pos, self.src)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.error("number, identifier or '('")


def parse(src: str) -> Expr:
    """Parse ``src`` into an AST or raise :class:`ExprSyntaxError`."""
    if not isinstance(src, str):
        raise ExprSyntaxError("expression must be a string", 0, repr(src))
    return _Parser(src).parse()


def evaluate(e: Expr, x=0.0, y=0.0):
    if isinstance(e, Num):
        return e.value if np.ndim(x) == 0 and np.ndim(y) == 0 else np.full(np.broadcast(x, y).shape, e.value)
    if isinstance(e, Var):
        v = x if e.name == "x" else y
        return np.asarray(v, dtype=float) if np.ndim(v) else float(v)
    if isinstance(e, Unary):
        v = evaluate(e.operand, x, y)
        return -v if e.op == "-" else v
    if isinstance(e, Call):
        with np.errstate(all="ignore"):
            return FUNCTIONS[e.func](evaluate(e.arg, x, y))
    a = evaluate(e.left, x, y)
    b = evaluate(e.right, x, y)
    with np.errstate(all="ignore"):
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return np.divide(a, b) if np.ndim(a) or np.ndim(b) else _scalar_div(a, b)
        return np.power(a, b) if np.ndim(a) or np.ndim(b) else _scalar_pow(a, b)


def _scalar_div(a, b):
    if b == 0.0:
        if a == 0.0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


def _scalar_pow(a, b):
    try:
        r = a ** b
    except ZeroDivisionError:
        return math.inf
    except OverflowError:
        return math.inf
    return r if not isinstance(r, complex) else math.nan


def to_source(e: Expr) -> str:
    """Render an AST back to text that parses to the same AST."""
    if isinstance(e, Num):
        return "1e999" if math.isinf(e.value) else repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, Unary):
        return f"({e.op}{to_source(e.operand)})"
    return f"({to_source(e.left)} {e.op} {to_source(e.right)})"


def compile_expr(src):
    """Parse once and return a vectorized callable ``f(x, y=0)``."""
    tree = parse(src)

    def f(x, y=0.0):
        return evaluate(tree, x, y)

    f.tree = tree
    f.source = src
    return f
