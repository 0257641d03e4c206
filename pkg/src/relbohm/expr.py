"""Closed-form scalar fields T(t, x, y, z) with analytic gradients.

Expressions are parsed with the standard ``ast`` module and then checked
against a small whitelist; see ``docs/expressions.md`` for the grammar.
Evaluation is forward-mode: every node returns ``(value, gradient)`` with the
gradient holding the four partial derivatives ``d_mu T``.
"""
from __future__ import annotations

import ast

import numpy as np

from .errors import ValidationError

COORDS = {"t": 0, "x": 1, "y": 2, "z": 3}
FUNCS = {
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda v: -np.sin(v)),
    "exp": (np.exp, np.exp),
}


class Expr:
    def value_and_grad(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value_and_grad(np.asarray(x, dtype=float))[0]

    def gradient(self, x):
        return self.value_and_grad(np.asarray(x, dtype=float))[1]


class Const(Expr):
    def __init__(self, value):
        self.value = float(value)

    def value_and_grad(self, x):
        shape = x.shape[:-1]
        return np.full(shape, self.value), np.zeros(shape + (4,))

    def __str__(self):
        return repr(self.value)


class Coord(Expr):
    def __init__(self, index):
        self.index = index

    def value_and_grad(self, x):
        g = np.zeros(x.shape)
        g[..., self.index] = 1.0
        return x[..., self.index].copy(), g

    def __str__(self):
        return "txyz"[self.index]


class Neg(Expr):
    def __init__(self, arg):
        self.arg = arg

    def value_and_grad(self, x):
        v, g = self.arg.value_and_grad(x)
        return -v, -g

    def __str__(self):
        return f"(-{self.arg})"


class BinOp(Expr):
    def __init__(self, op, left, right):
        self.op, self.left, self.right = op, left, right

    def value_and_grad(self, x):
        a, ga = self.left.value_and_grad(x)
        b, gb = self.right.value_and_grad(x)
        if self.op == "+":
            return a + b, ga + gb
        if self.op == "-":
            return a - b, ga - gb
        if self.op == "*":
            return a * b, ga * b[..., None] + a[..., None] * gb
        if self.op == "/":
            return a / b, (ga * b[..., None] - a[..., None] * gb) / (b * b)[..., None]
        raise AssertionError(self.op)

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


class Pow(Expr):
    def __init__(self, base, exponent: float):
        self.base, self.exponent = base, float(exponent)

    def value_and_grad(self, x):
        v, g = self.base.value_and_grad(x)
        p = self.exponent
        return v**p, (p * v ** (p - 1))[..., None] * g

    def __str__(self):
        return f"({self.base} ** {self.exponent!r})"


class Call(Expr):
    def __init__(self, name, arg):
        self.name, self.arg = name, arg

    def value_and_grad(self, x):
        f, df = FUNCS[self.name]
        v, g = self.arg.value_and_grad(x)
        return f(v), df(v)[..., None] * g

    def __str__(self):
        return f"{self.name}({self.arg})"


_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}


def _build(node) -> Expr:
    if isinstance(node, ast.Expression):
        return _build(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return Const(node.value)
    if isinstance(node, ast.Name):
        if node.id in COORDS:
            return Coord(COORDS[node.id])
        if node.id == "pi":
            return Const(np.pi)
        raise ValidationError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand)
        if isinstance(node.op, ast.UAdd):
            return inner
        return Const(-inner.value) if isinstance(inner, Const) else Neg(inner)
    if isinstance(node, ast.BinOp):
        if type(node.op) in _BINOPS:
            return BinOp(_BINOPS[type(node.op)], _build(node.left), _build(node.right))
        if isinstance(node.op, ast.Pow):
            exp = _build(node.right)
            if not isinstance(exp, Const):
                raise ValidationError("exponents must be numeric constants")
            return Pow(_build(node.left), exp.value)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ValidationError(f"{node.func.id} takes exactly one argument")
        return Call(node.func.id, _build(node.args[0]))
    raise ValidationError(f"unsupported syntax in expression: {ast.dump(node)[:60]}")


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse expression {text!r}: {exc.msg}") from None
    expr = _build(tree)
    expr.source = text
    return expr
