"""Tiny arithmetic grammar for initial data and coefficient expressions.

Allowed: numbers, the variables ``x`` and ``r`` (same node coordinate),
``pi``, binary ``+ - * / **``, unary ``+ -`` and the functions
``cos``, ``exp``, ``abs``. Anything else is rejected before evaluation.
"""
from __future__ import annotations

import ast
import math

import numpy as np

FUNCTIONS = {"cos": np.cos, "exp": np.exp, "abs": np.abs}
CONSTANTS = {"pi": math.pi}
VARIABLES = ("x", "r")

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}
_UNARY = {ast.USub: np.negative, ast.UAdd: np.positive}


class ExpressionError(ValueError):
    def __init__(self, message, col=None):
        super().__init__(message if col is None else f"{message} (column {col + 1})")
        self.col = col


def parse(text: str) -> ast.Expression:
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error in {text!r}: {exc.msg}",
                              (exc.offset or 1) - 1) from None
    _validate(tree.body)
    return tree


def _validate(node):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}", node.col_offset)
    elif isinstance(node, ast.Name):
        if node.id not in VARIABLES and node.id not in CONSTANTS:
            raise ExpressionError(f"unknown name {node.id!r}", node.col_offset)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError("unsupported operator", node.col_offset)
        _validate(node.left)
        _validate(node.right)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError("unsupported unary operator", node.col_offset)
        _validate(node.operand)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError("unsupported function call", node.col_offset)
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument", node.col_offset)
        _validate(node.args[0])
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__}",
                              getattr(node, "col_offset", None))


def _eval(node, x):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return x if node.id in VARIABLES else CONSTANTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, x))
    return FUNCTIONS[node.func.id](_eval(node.args[0], x))


def evaluate(text: str, x) -> np.ndarray:
    """Evaluate ``text`` on node coordinates ``x``; constants broadcast."""
    x = np.asarray(x, float)
    tree = parse(text)
    with np.errstate(all="ignore"):
        out = np.broadcast_to(np.asarray(_eval(tree.body, x), float), x.shape).copy()
    if not np.all(np.isfinite(out)):
        raise ExpressionError(f"expression {text!r} is not finite on the grid")
    return out
