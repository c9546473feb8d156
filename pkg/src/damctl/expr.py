"""A tiny arithmetic language for scenario fields, evaluated on numpy arrays.

Allowed: numbers, the variables ``x1``, ``x2``, ``t``, the constant ``pi``,
``+ - * / **``, unary minus, and calls to ``sin``, ``cos``, ``exp``.
"""
from __future__ import annotations

import ast

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_VARS = ("x1", "x2", "t")
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}


class ExpressionError(ValueError):
    pass


class Expression:
    def __init__(self, source):
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source))
        if not isinstance(source, str):
            raise ExpressionError(f"expression must be a string or number, got {type(source).__name__}")
        self.source = source
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"{self.source!r}: only numeric constants are allowed")
        elif isinstance(node, ast.Name):
            if node.id not in _VARS and node.id != "pi":
                raise ExpressionError(f"{self.source!r}: unknown name {node.id!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"{self.source!r}: operator {type(node.op).__name__} not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"{self.source!r}: only sin, cos, exp may be called")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{self.source!r}: functions take exactly one argument")
            self._check(node.args[0])
        else:
            raise ExpressionError(f"{self.source!r}: unsupported syntax {type(node).__name__}")

    @property
    def uses_time(self) -> bool:
        return any(isinstance(n, ast.Name) and n.id == "t" for n in ast.walk(self._tree))

    def __call__(self, x1, x2, t=0.0):
        x1 = np.asarray(x1, dtype=float)
        env = {"x1": x1, "x2": np.asarray(x2, dtype=float), "t": float(t), "pi": np.pi}
        with np.errstate(all="raise"):
            try:
                val = self._eval(self._tree, env)
            except FloatingPointError as exc:
                raise ExpressionError(f"{self.source!r}: {exc}") from None
        return np.broadcast_to(np.asarray(val, dtype=float), x1.shape).copy()

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        return _FUNCS[node.func.id](self._eval(node.args[0], env))

    def __repr__(self):
        return f"Expression({self.source!r})"
