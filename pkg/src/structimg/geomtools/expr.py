"""Closed arithmetic grammar used as the numeric-computation tool.

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/" | "×" | "÷") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom (("^" | "**") unary)?        right-associative
    atom   := NUMBER | "pi" | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Unary minus binds looser than the power operator, so ``-2^2 == -4``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union


class ParseError(ValueError):
    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} at position {position}")
        self.position = position


class MathDomain(ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Node", ...]


Node = Union[Num, Const, Unary, Binary, Call]

CONSTANTS = {"pi": math.pi}


def _sqrt(x: float) -> float:
    if x < 0:
        raise MathDomain(f"sqrt of negative number {x:g}")
    return math.sqrt(x)


FUNCTIONS: dict[str, tuple[int, Callable[..., float]]] = {
    "sqrt": (1, _sqrt),
    "sin": (1, math.sin),
    "cos": (1, math.cos),
    "tan": (1, math.tan),
    "atan2": (2, math.atan2),
    "abs": (1, abs),
    "radians": (1, math.radians),
    "degrees": (1, math.degrees),
}

_OP_ALIASES = {"×": "*", "÷": "/", "**": "^"}
_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>\*\*|[-+*/^×÷(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str) -> None:
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.toks[self.i]

    def take(self) -> tuple[str, str, int]:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value: str) -> None:
        kind, v, pos = self.take()
        if v != value or kind != "op":
            raise ParseError(f"expected {value!r}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {v!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/", "×", "÷"):
            op = self.take()[1]
            op = _OP_ALIASES.get(op, op)
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, v, _ = self.peek()
        if kind == "op" and v in ("-", "+"):
            self.take()
            return Unary(v, self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, v, _ = self.peek()
        if kind == "op" and v in ("^", "**"):
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, v, pos = self.take()
        if kind == "num":
            value = float(v)
            if not math.isfinite(value):
                raise ParseError(f"number {v} out of range", pos)
            return Num(value)
        if kind == "name":
            if v in CONSTANTS:
                return Const(v)
            if v not in FUNCTIONS:
                raise ParseError(f"unknown name {v!r}", pos)
            self.expect("(")
            args = [self.expr()]
            while self.peek()[1] == "," and self.peek()[0] == "op":
                self.take()
                args.append(self.expr())
            self.expect(")")
            arity = FUNCTIONS[v][0]
            if len(args) != arity:
                raise ParseError(f"{v} takes {arity} argument(s), got {len(args)}", pos)
            return Call(v, tuple(args))
        if kind == "op" and v == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ParseError("unexpected end of expression", pos)
        raise ParseError(f"unexpected {v!r}", pos)


def parse_expression(text: str) -> Node:
    return _Parser(text).parse()


def _check(v: float) -> float:
    if isinstance(v, complex) or not math.isfinite(v):
        raise MathDomain("result is not a finite real number")
    return v


def evaluate(node: Node) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Unary):
        v = evaluate(node.operand)
        return -v if node.op == "-" else v
    if isinstance(node, Call):
        fn = FUNCTIONS[node.name][1]
        args = [evaluate(a) for a in node.args]
        try:
            return _check(fn(*args))
        except (ValueError, OverflowError) as e:
            raise MathDomain(f"{node.name}: {e}") from e
    a, b = evaluate(node.left), evaluate(node.right)
    try:
        if node.op == "+":
            return _check(a + b)
        if node.op == "-":
            return _check(a - b)
        if node.op == "*":
            return _check(a * b)
        if node.op == "/":
            if b == 0:
                raise MathDomain("division by zero")
            return _check(a / b)
        return _check(math.pow(a, b))
    except (ValueError, OverflowError, ZeroDivisionError) as e:
        raise MathDomain(f"{node.op}: {e}") from e


def pretty(node: Node) -> str:
    """Fully parenthesized rendering; parses back to the same tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Unary):
        return f"({node.op}{pretty(node.operand)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(pretty(a) for a in node.args)})"
    return f"({pretty(node.left)} {node.op} {pretty(node.right)})"


def eval_expression(expr: str) -> float:
    return evaluate(parse_expression(expr))
