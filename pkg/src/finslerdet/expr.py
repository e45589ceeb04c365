"""Arithmetic expressions for field components.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' factor)?
    base   := number | ident | func '(' expr ')' | '(' expr ')'

Identifiers are restricted to a fixed variable set (``x1..xn`` for fields)
and unknown names are rejected at parse time. Functions: sin, cos, exp, sqrt.
There is no unary minus; write ``0 - x1``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ExpressionParseError

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
}

_BINOPS: dict[str, Callable] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Num, Var, Call, BinOp]


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    column: int


def variable_names(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i + 1}" for i in range(n))


def _tokenize(source: str, line: int) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionParseError(
                f"unexpected character {source[pos]!r}", line, pos + 1, source
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos + 1))
        pos = m.end()
    tokens.append(_Token("end", "", len(source) + 1))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: tuple[str, ...], line: int):
        self.source = source
        self.variables = set(variables)
        self.line = line
        self.tokens = _tokenize(source, line)
        self.i = 0

    def error(self, message: str, token: _Token):
        return ExpressionParseError(message, self.line, token.column, self.source)

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}", self.tok)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected token {self.tok.text!r}", self.tok)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        base = self.base()
        if self.accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def base(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            value = float(tok.text)
            if not math.isfinite(value):
                raise self.error(f"number {tok.text!r} overflows", tok)
            self.i += 1
            return Num(value)
        if tok.kind == "ident":
            self.i += 1
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text not in self.variables:
                allowed = ", ".join(sorted(self.variables)) or "none"
                raise self.error(
                    f"unknown identifier {tok.text!r} (allowed: {allowed})", tok
                )
            return Var(tok.text)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise self.error(f"expected a number, variable, function or '(', found {found!r}", tok)


def parse(source: str, variables: tuple[str, ...], line: int = 1) -> Node:
    """Parse ``source`` into an AST; ``line`` is only used for error positions."""
    return _Parser(source, variables, line).parse()


def to_source(node: Node) -> str:
    """Render with the minimum parentheses needed to reparse to the same tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    prec = _PRECEDENCE[node.op]
    left = to_source(node.left)
    right = to_source(node.right)
    if _needs_parens(node.left, prec, right_side=node.op == "^"):
        left = f"({left})"
    if _needs_parens(node.right, prec, right_side=node.op != "^"):
        right = f"({right})"
    return f"{left}{node.op}{right}" if node.op in "*/^" else f"{left} {node.op} {right}"


def _needs_parens(child: Node, parent_prec: int, right_side: bool) -> bool:
    if not isinstance(child, BinOp):
        return False
    child_prec = _PRECEDENCE[child.op]
    # '^' is right associative: the left operand needs parens at equal
    # precedence, the right does not. The other operators are left associative.
    return child_prec < parent_prec or (child_prec == parent_prec and right_side)


def evaluate(node: Node, env: dict[str, float | np.ndarray]):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Call):
        return FUNCTIONS[node.func](evaluate(node.arg, env))
    return _BINOPS[node.op](evaluate(node.left, env), evaluate(node.right, env))


def _compile(node: Node, index: dict[str, int]) -> Callable:
    if isinstance(node, Num):
        v = node.value
        return lambda x: v
    if isinstance(node, Var):
        k = index[node.name]
        return lambda x: x[k]
    if isinstance(node, Call):
        fn = FUNCTIONS[node.func]
        arg = _compile(node.arg, index)
        return lambda x: fn(arg(x))
    op = _BINOPS[node.op]
    left = _compile(node.left, index)
    right = _compile(node.right, index)
    return lambda x: op(left(x), right(x))


@dataclass(frozen=True)
class FieldExpression:
    """A parsed expression over a fixed ordered variable tuple.

    Calling it with a sequence of variable values (``x[k]`` may be a scalar or
    an array for vectorized evaluation) returns the expression value.
    """

    source: str
    variables: tuple[str, ...]
    ast: Node

    @classmethod
    def parse(cls, source: str, variables: tuple[str, ...], line: int = 1) -> "FieldExpression":
        return cls(source, tuple(variables), parse(source, tuple(variables), line))

    def __post_init__(self):
        index = {name: k for k, name in enumerate(self.variables)}
        object.__setattr__(self, "_fn", _compile(self.ast, index))

    def __call__(self, values):
        return self._fn(values)

    def pretty(self) -> str:
        return to_source(self.ast)
