"""Arithmetic expressions for Calculate nodes.

Grammar (left-associative, usual precedence)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := NUMBER | NAME | "(" expr ")" | "-" factor

``×``, ``÷`` and ``−`` are accepted as aliases. Numbers are parsed as exact
fractions so that evaluation over :class:`fractions.Fraction` bindings stays
exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

from .errors import CalcError

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|(.))")
_ALIASES = {"×": "*", "÷": "/", "−": "-"}
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Ref, Neg, BinOp]


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens, pos = [], 0
    text = "".join(_ALIASES.get(ch, ch) for ch in text)
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        pos = m.end()
        num, name, other = m.groups()
        if num is not None:
            tokens.append(("num", num))
        elif name is not None:
            tokens.append(("name", name))
        elif other is not None and not other.isspace():
            if other not in "+-*/()":
                raise CalcError(f"unexpected character {other!r} in {text!r}", "parse-error")
            tokens.append(("op", other))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self) -> Expr:
        if not self.tokens:
            raise CalcError("empty expression", "parse-error")
        node = self.expr()
        if self.i != len(self.tokens):
            raise CalcError(f"trailing input in {self.text!r}", "parse-error")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        kind, val = self.take()
        if kind == "num":
            return Num(Fraction(val))
        if kind == "name":
            return Ref(val)
        if (kind, val) == ("op", "-"):
            return Neg(self.factor())
        if (kind, val) == ("op", "("):
            node = self.expr()
            if self.take() != ("op", ")"):
                raise CalcError(f"unbalanced parentheses in {self.text!r}", "parse-error")
            return node
        raise CalcError(f"unexpected token {val!r} in {self.text!r}", "parse-error")


def parse(text: str) -> Expr:
    return _Parser(text).parse()


def references(expr: Expr | str) -> list[str]:
    """Names referenced, in first-appearance order, without duplicates."""
    if isinstance(expr, str):
        expr = parse(expr)
    out: list[str] = []

    def walk(e):
        if isinstance(e, Ref):
            if e.name not in out:
                out.append(e.name)
        elif isinstance(e, Neg):
            walk(e.operand)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return out


def top_op(expr: Expr | str) -> str | None:
    """Operator at the root of the expression, or None for a bare leaf."""
    if isinstance(expr, str):
        expr = parse(expr)
    if isinstance(expr, BinOp):
        return expr.op
    if isinstance(expr, Neg):
        return "neg"
    return None


def render(expr: Expr) -> str:
    """Canonical text with the minimum parentheses."""
    if isinstance(expr, Num):
        v = expr.value
        return str(v.numerator) if v.denominator == 1 else str(float(v))
    if isinstance(expr, Ref):
        return expr.name
    if isinstance(expr, Neg):
        inner = render(expr.operand)
        return f"-({inner})" if isinstance(expr.operand, BinOp) else f"-{inner}"
    left = render(expr.left)
    right = render(expr.right)
    if isinstance(expr.left, BinOp) and _PREC[expr.left.op] < _PREC[expr.op]:
        left = f"({left})"
    if isinstance(expr.right, BinOp) and _PREC[expr.right.op] <= _PREC[expr.op]:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


def rename(text: str, mapping: Mapping[str, str]) -> str:
    """Re-target references; returns canonical text."""

    def walk(e):
        if isinstance(e, Ref):
            return Ref(mapping.get(e.name, e.name))
        if isinstance(e, Neg):
            return Neg(walk(e.operand))
        if isinstance(e, BinOp):
            return BinOp(e.op, walk(e.left), walk(e.right))
        return e

    return render(walk(parse(text)))


def sum_of(names: list[str]) -> str:
    return " + ".join(names)


def eval_calc(expr: Expr | str, bindings: Mapping[str, object]):
    """Evaluate with plain Python arithmetic over the bound values.

    Raises :class:`CalcError` with code ``unbound-name`` or ``division-by-zero``.
    """
    if isinstance(expr, str):
        expr = parse(expr)
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Ref):
        try:
            return bindings[expr.name]
        except KeyError:
            raise CalcError(f"unbound name {expr.name!r}", "unbound-name") from None
    if isinstance(expr, Neg):
        return -eval_calc(expr.operand, bindings)
    left = eval_calc(expr.left, bindings)
    right = eval_calc(expr.right, bindings)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if right == 0:
        raise CalcError("division by zero", "division-by-zero")
    return left / right
