"""Scalar-field expression language.

Grammar (whitespace is ignored)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' exponent)?
    exponent := ['-'] INT | '(' ['-'] INT ')'
    atom   := NUMBER | NAME | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

Binding strength is ``^`` > unary ``-`` > ``* /`` > ``+ -``; binary operators
associate to the left.  ``-x^2`` therefore means ``-(x^2)``.

Variables are ``x1..xn``, ``y1..ym`` and the gradient entries ``z<i><l>``
(``dy_i/dx_l``), also written ``z<i>_<l>``.  When ``m == 1`` the short form
``z<l>`` is accepted too.  Functions: ``min(a, b)``, ``max(a, b)``, ``abs(a)``.

Exponents are integers only; ``a^k`` is evaluated as ``a*a*...*a`` (left to
right) and ``a^-k`` as ``1/(a^k)``, identically in the scalar and array paths.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Neg", "BinOp", "Pow", "Call",
    "ExprError", "ExprSyntaxError", "ExprNameError", "ExprArityError", "ExprEvalError",
    "parse", "to_source", "evaluate", "evaluate_array", "variables",
]


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, source: str, offset: int):
        self.offset = offset
        self.line = source.count("\n", 0, offset) + 1
        self.column = offset - (source.rfind("\n", 0, offset) + 1) + 1
        super().__init__(f"{message} at line {self.line}, column {self.column} (offset {offset})")


class ExprNameError(ExprError):
    pass


class ExprArityError(ExprError):
    pass


class ExprEvalError(ExprError, ArithmeticError):
    pass


# -- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # 'x', 'y' or 'z'
    index: int  # 0-based; for 'z' it is i*n + l

    def name(self, n: int) -> str:
        if self.kind == "z":
            i, l = divmod(self.index, n)
            return f"z{i + 1}_{l + 1}"
        return f"{self.kind}{self.index + 1}"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]

_FUNCS = {"min": 2, "max": 2, "abs": 1}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        mt = _TOKEN.match(src, pos)
        if mt is None or mt.end() == pos:
            start = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[start]!r}", src, start)
        kind = mt.lastgroup
        toks.append(_Tok(kind, mt.group(kind), mt.start(kind)))
        pos = mt.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


_VAR = re.compile(r"^(x|y)(\d+)$|^z(\d+)_(\d+)$|^z(\d)(\d)$|^z(\d+)$")


def _resolve(name: str, n: int, m: int, src: str, pos: int) -> Var:
    mt = _VAR.match(name)
    if mt is None:
        raise ExprNameError(f"unknown identifier {name!r} at offset {pos}")
    if mt.group(1):
        kind, k = mt.group(1), int(mt.group(2))
        bound = n if kind == "x" else m
        if not 1 <= k <= bound:
            raise ExprArityError(f"{name!r} out of range: arity is (n={n}, m={m})")
        return Var(kind, k - 1)
    if mt.group(3):
        i, l = int(mt.group(3)), int(mt.group(4))
    elif mt.group(5):
        i, l = int(mt.group(5)), int(mt.group(6))
    else:
        if m != 1:
            raise ExprNameError(f"short gradient name {name!r} needs m == 1")
        i, l = 1, int(mt.group(7))
    if not (1 <= i <= m and 1 <= l <= n):
        raise ExprArityError(f"{name!r} out of range: arity is (n={n}, m={m})")
    return Var("z", (i - 1) * n + (l - 1))


class _Parser:
    def __init__(self, src: str, n: int, m: int):
        self.src = src
        self.n, self.m = n, m
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self, text: str | None = None) -> _Tok:
        t = self.tok
        if text is not None and t.text != text:
            what = t.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {what!r}", self.src, t.pos)
        self.i += 1
        return t

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.src, self.tok.pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.take().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.take().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        paren = self.tok.text == "("
        if paren:
            self.take()
        sign = 1
        if self.tok.text == "-":
            self.take()
            sign = -1
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            raise ExprSyntaxError("exponent must be an integer literal", self.src, t.pos)
        self.take()
        if paren:
            self.take(")")
        return sign * int(t.text)

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "name":
            self.take()
            if t.text in _FUNCS:
                self.take("(")
                args = [self.expr()]
                while self.tok.text == ",":
                    self.take()
                    args.append(self.expr())
                self.take(")")
                if len(args) != _FUNCS[t.text]:
                    raise ExprSyntaxError(
                        f"{t.text}() takes {_FUNCS[t.text]} argument(s), got {len(args)}",
                        self.src, t.pos)
                return Call(t.text, tuple(args))
            return _resolve(t.text, self.n, self.m, self.src, t.pos)
        if t.text == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        what = t.text or "end of input"
        raise ExprSyntaxError(f"unexpected {what!r}", self.src, t.pos)


def parse(source: str, arity: tuple[int, int]) -> Expr:
    """Parse ``source`` for a field on R^n x R^m x R^(m*n)."""
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", source or "", 0)
    n, m = arity
    return _Parser(source, n, m).parse()


def to_source(e: Expr, n: int = 1) -> str:
    """Fully parenthesised source text; ``parse(to_source(e))`` rebuilds ``e``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name(n)
    if isinstance(e, Neg):
        return f"(-{to_source(e.arg, n)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left, n)}{e.op}{to_source(e.right, n)})"
    if isinstance(e, Pow):
        return f"({to_source(e.base, n)}^({e.exponent}))"
    if isinstance(e, Call):
        return f"{e.func}({','.join(to_source(a, n) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def variables(e: Expr) -> set[Var]:
    if isinstance(e, Var):
        return {e}
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Pow):
        return variables(e.base)
    if isinstance(e, Call):
        return set().union(*(variables(a) for a in e.args))
    return set()


def _ipow(b, k: int):
    if k == 0:
        return b * 0.0 + 1.0
    r = b
    for _ in range(abs(k) - 1):
        r = r * b
    return r


Point = Union[Mapping[str, float], Sequence]


def _lookup(v: Var, point) -> float:
    x, y, z = point
    return float({"x": x, "y": y, "z": z}[v.kind][v.index])


def evaluate(e: Expr, point) -> float:
    """Evaluate at a single point ``(x, y, z)`` (three sequences)."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return _lookup(e, point)
    if isinstance(e, Neg):
        return -evaluate(e.arg, point)
    if isinstance(e, BinOp):
        a = evaluate(e.left, point)
        b = evaluate(e.right, point)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0.0:
            raise ExprEvalError("division by zero")
        return a / b
    if isinstance(e, Pow):
        b = evaluate(e.base, point)
        p = _ipow(b, e.exponent)
        if e.exponent < 0:
            if p == 0.0:
                raise ExprEvalError("division by zero in negative power")
            return 1.0 / p
        return p
    if isinstance(e, Call):
        args = [evaluate(a, point) for a in e.args]
        if e.func == "abs":
            return abs(args[0])
        if e.func == "min":
            return args[0] if args[0] <= args[1] else args[1]
        return args[0] if args[0] >= args[1] else args[1]
    raise TypeError(f"not an expression node: {e!r}")


def evaluate_array(e: Expr, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorised evaluation; ``x``, ``y``, ``z`` have shapes (N, n), (N, m), (N, m*n)."""
    cols = {"x": x, "y": y, "z": z}
    shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1], z.shape[:-1])

    def ev(node):
        if isinstance(node, Num):
            return np.full(shape, node.value)
        if isinstance(node, Var):
            return np.broadcast_to(cols[node.kind][..., node.index], shape).astype(float)
        if isinstance(node, Neg):
            return -ev(node.arg)
        if isinstance(node, BinOp):
            a, b = ev(node.left), ev(node.right)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if np.any(b == 0.0):
                raise ExprEvalError("division by zero")
            return a / b
        if isinstance(node, Pow):
            p = _ipow(ev(node.base), node.exponent)
            if node.exponent < 0:
                if np.any(p == 0.0):
                    raise ExprEvalError("division by zero in negative power")
                return 1.0 / p
            return p
        if isinstance(node, Call):
            args = [ev(a) for a in node.args]
            if node.func == "abs":
                return np.abs(args[0])
            if node.func == "min":
                return np.where(args[0] <= args[1], args[0], args[1])
            return np.where(args[0] >= args[1], args[0], args[1])
        raise TypeError(f"not an expression node: {node!r}")

    return ev(e)
