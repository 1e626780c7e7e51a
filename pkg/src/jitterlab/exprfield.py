"""User-supplied 2D fields: a small expression language with exact gradients.

Grammar (lowest to highest binding)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?            # right associative
    atom   := NUMBER | 'pi' | 'x' | 'y' | FUNC '(' expr ')' | '(' expr ')'

Gradients come from forward-mode dual numbers carrying (value, d/dx, d/dy).
The dual arithmetic works on floats and on numpy arrays alike, so a parsed
expression can drive the vectorised descent kernel directly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .landscape import Point2

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")
VARIABLES = ("x", "y")
CONSTANTS = {"pi": math.pi}
ALLOWED_NAMES = VARIABLES + tuple(CONSTANTS) + FUNCTIONS

BUILTIN_EXPRESSION = "sin(pi*x)*sin(2*pi*x)*cos(pi*y)*cos(2*pi*y)"


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int, source: str = ""):
        self.message = message
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")

    def pretty(self) -> str:
        if not self.source:
            return str(self)
        return f"{self}\n  {self.source}\n  {' ' * self.offset}^"


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ExprDomainError(ArithmeticError):
    def __init__(self, message: str, node: "Expr"):
        self.node = node
        super().__init__(f"{message} in `{to_source(node)}`")


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Const, Var, Neg, BinOp, Call]


# --- tokenizer / parser ----------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", _byte_offset(src, pos), src)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), _byte_offset(src, pos)))
        pos = m.end()
    toks.append(_Tok("end", "", _byte_offset(src, len(src))))
    return toks


def _byte_offset(src: str, i: int) -> int:
    return len(src[:i].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ExprSyntaxError(msg, tok.offset, self.src)

    def expect(self, text):
        if self.tok.text != text or self.tok.kind == "end":
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise self.error(f"expected {text!r}, found {found}")
        self.i += 1

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r} (implicit multiplication is not supported)")
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.i += 1
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.i += 1
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in CONSTANTS:
                return Const(tok.text)
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            raise UnknownIdentifierError(
                f"unknown identifier {tok.text!r}; allowed names are {', '.join(ALLOWED_NAMES)}",
                tok.offset,
                self.src,
            )
        if tok.kind == "op" and tok.text == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise self.error(f"expected a number, name or '(', found {found}")


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree."""
    return _Parser(source).parse()


# --- printing --------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_source(node: Expr) -> str:
    """Render with the fewest parentheses that re-parse to the same tree."""

    def wrap(child, need):
        s = to_source(child)
        return f"({s})" if need else s

    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        return "-" + wrap(node.operand, _prec(node.operand) < _NEG_PREC)
    p = _PREC[node.op]
    if node.op == "^":
        left = wrap(node.left, _prec(node.left) < _ATOM_PREC)
        right = wrap(node.right, _prec(node.right) < _NEG_PREC)
        return f"{left}^{right}"
    left = wrap(node.left, _prec(node.left) < p)
    right = wrap(node.right, _prec(node.right) <= p)
    return f"{left} {node.op} {right}"


# --- dual numbers ----------------------------------------------------------


class DualNumber:
    """value + dx*e1 + dy*e2 with e1*e2 = e1^2 = e2^2 = 0."""

    __slots__ = ("value", "dx", "dy")

    def __init__(self, value, dx=0.0, dy=0.0):
        self.value = value
        self.dx = dx
        self.dy = dy

    def __repr__(self):
        return f"DualNumber({self.value!r}, dx={self.dx!r}, dy={self.dy!r})"

    def __add__(self, o: "DualNumber"):
        return DualNumber(self.value + o.value, self.dx + o.dx, self.dy + o.dy)

    def __sub__(self, o: "DualNumber"):
        return DualNumber(self.value - o.value, self.dx - o.dx, self.dy - o.dy)

    def __mul__(self, o: "DualNumber"):
        return DualNumber(
            self.value * o.value,
            self.dx * o.value + self.value * o.dx,
            self.dy * o.value + self.value * o.dy,
        )

    def __truediv__(self, o: "DualNumber"):
        q = self.value / o.value
        return DualNumber(q, (self.dx - q * o.dx) / o.value, (self.dy - q * o.dy) / o.value)

    def __neg__(self):
        return DualNumber(-self.value, -self.dx, -self.dy)

    def chain(self, fval, fprime):
        """Apply a unary function with value fval and derivative fprime at self.value."""
        return DualNumber(fval, fprime * self.dx, fprime * self.dy)

    def ipow(self, n: int):
        if n == 0:
            return DualNumber(np.ones_like(self.value) if np.ndim(self.value) else 1.0, 0.0, 0.0)
        return self.chain(self.value**n, n * self.value ** (n - 1))


def _any(mask) -> bool:
    return bool(np.any(mask))


def _integer_literal(node: Expr) -> int | None:
    sign = 1
    while isinstance(node, Neg):
        sign, node = -sign, node.operand
    if isinstance(node, Num) and node.value.is_integer():
        return sign * int(node.value)
    return None


def eval_dual(node: Expr, x: DualNumber, y: DualNumber) -> DualNumber:
    """Evaluate ``node`` with the given dual seeds for x and y."""
    if isinstance(node, Num):
        return DualNumber(node.value)
    if isinstance(node, Const):
        return DualNumber(CONSTANTS[node.name])
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Neg):
        return -eval_dual(node.operand, x, y)
    if isinstance(node, Call):
        return _call(node, eval_dual(node.arg, x, y))

    a = eval_dual(node.left, x, y)
    if node.op == "^":
        n = _integer_literal(node.right)
        if n is not None:
            if n < 0 and _any(np.asarray(a.value) == 0):
                raise ExprDomainError("zero raised to a negative power", node)
            return a.ipow(n)
        if _any(np.asarray(a.value) <= 0):
            raise ExprDomainError("non-integer power of a non-positive base", node)
        b = eval_dual(node.right, x, y)
        la = a.chain(np.log(a.value), 1.0 / a.value)
        e = b * la
        return e.chain(np.exp(e.value), np.exp(e.value))
    b = eval_dual(node.right, x, y)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if _any(np.asarray(b.value) == 0):
        raise ExprDomainError("division by zero", node)
    return a / b


def _call(node: Call, u: DualNumber) -> DualNumber:
    v = u.value
    f = node.func
    if f == "sin":
        return u.chain(np.sin(v), np.cos(v))
    if f == "cos":
        return u.chain(np.cos(v), -np.sin(v))
    if f == "tan":
        c = np.cos(v)
        if _any(c == 0):
            raise ExprDomainError("tan at a pole", node)
        return u.chain(np.tan(v), 1.0 / (c * c))
    if f == "exp":
        ev = np.exp(v)
        return u.chain(ev, ev)
    if f == "log":
        if _any(np.asarray(v) <= 0):
            raise ExprDomainError("log of a non-positive value", node)
        return u.chain(np.log(v), 1.0 / v)
    if f == "sqrt":
        if _any(np.asarray(v) <= 0):
            raise ExprDomainError("sqrt of a non-positive value (gradient undefined at 0)", node)
        r = np.sqrt(v)
        return u.chain(r, 0.5 / r)
    if f == "abs":
        return u.chain(np.abs(v), np.sign(v))
    raise AssertionError(f"unhandled function {f}")


def eval_with_grad(e: Expr, p: Point2) -> tuple[float, Point2]:
    """Value and exact gradient of ``e`` at ``p`` in one forward pass."""
    d = eval_dual(e, DualNumber(p.x, 1.0, 0.0), DualNumber(p.y, 0.0, 1.0))
    return float(d.value), Point2(float(d.dx), float(d.dy))


def evaluate(e: Expr, x: float, y: float) -> float:
    return float(eval_dual(e, DualNumber(x), DualNumber(y)).value)


class ExprField:
    """A parsed expression usable anywhere a landscape is expected."""

    def __init__(self, source: str):
        self.source = source
        self.expr = parse(source)

    def __repr__(self):
        return f"ExprField({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, ExprField) and other.expr == self.expr

    def __hash__(self):
        return hash(self.expr)

    def _seed(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        zero = np.zeros_like(x)
        one = np.ones_like(x)
        return DualNumber(x, one, zero), DualNumber(y, zero, one)

    def value(self, x, y):
        d = eval_dual(self.expr, *self._seed(x, y))
        return np.broadcast_to(d.value, np.shape(x)) + 0.0

    def gradient(self, x, y):
        d = eval_dual(self.expr, *self._seed(x, y))
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return np.broadcast_to(d.dx, shape) + 0.0, np.broadcast_to(d.dy, shape) + 0.0

    def eval(self, p: Point2) -> float:
        return evaluate(self.expr, p.x, p.y)

    def grad(self, p: Point2) -> Point2:
        return eval_with_grad(self.expr, p)[1]
