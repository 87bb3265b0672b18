"""Small arithmetic-expression evaluator for user-supplied right-hand sides.

Expressions are parsed with :mod:`ast` and only a whitelisted subset of
nodes is accepted, so nothing outside plain arithmetic can run.  ``^`` is
read as power.  Evaluation is vectorized through numpy.
"""

from __future__ import annotations

import ast
import operator as _op
from typing import Callable, Iterable

import numpy as np


class ExpressionError(ValueError):
    pass


_BINOPS = {
    ast.Add: _op.add,
    ast.Sub: _op.sub,
    ast.Mult: _op.mul,
    ast.Div: _op.truediv,
    ast.Pow: np.power,
}
_UNOPS = {ast.UAdd: _op.pos, ast.USub: _op.neg}


def _pow(x, y):
    return np.power(np.asarray(x, dtype=float), y)


FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "pow": _pow,
    "min": np.minimum,
    "max": np.maximum,
}
CONSTANTS = {"pi": np.pi}


class Expression:
    """Compiled expression over a fixed set of variable names."""

    def __init__(self, source: str, variables: Iterable[str] = ("t", "x", "y")):
        if not isinstance(source, str) or not source.strip():
            raise ExpressionError("expression must be a non-empty string")
        self.source = source
        self.variables = tuple(variables)
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg} (col {exc.offset})") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNOPS:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                name = getattr(node.func, "id", "?")
                raise ExpressionError(f"unknown function {name!r}")
            if node.keywords:
                raise ExpressionError("keyword arguments not allowed")
            arity = 2 if node.func.id in ("pow", "min", "max") else 1
            if len(node.args) != arity:
                raise ExpressionError(f"{node.func.id} takes {arity} argument(s)")
            for arg in node.args:
                self._check(arg)
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in CONSTANTS:
                raise ExpressionError(f"unknown name {node.id!r}; allowed: {', '.join(self.variables)}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"constant {node.value!r} not allowed")
        else:
            raise ExpressionError(f"syntax {type(node).__name__} not allowed")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            return FUNCTIONS[node.func.id](*(self._eval(a, env) for a in node.args))
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else CONSTANTS[node.id]
        return float(node.value)

    def __call__(self, *args):
        if len(args) != len(self.variables):
            raise TypeError(f"expected {len(self.variables)} arguments, got {len(args)}")
        arrays = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in args))
        env = dict(zip(self.variables, arrays))
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), arrays[0].shape) if arrays else out

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_expression(source: str, variables: Iterable[str] = ("t", "x", "y")) -> Expression:
    return Expression(source, variables)
