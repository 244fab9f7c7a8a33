"""Arithmetic expressions for model coefficients given in a config file.

The grammar is ``+ - * /``, unary minus, parentheses, numeric constants,
``exp(...)`` and the variables ``t, x, x_d, u, q``. Anything else (attribute
access, other calls, comparisons, names) is rejected at parse time, so a
config file can never run arbitrary code.
"""
from __future__ import annotations

import ast

import numpy as np

from .errors import ConfigError

VARIABLES = ("t", "x", "x_d", "u", "q")
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


def _compile(node, allowed):
    if isinstance(node, ast.Expression):
        return _compile(node.body, allowed)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        if node.id not in allowed:
            raise ConfigError(f"unknown variable {node.id!r}; allowed: {', '.join(allowed)}")
        name = node.id
        return lambda env: env[name]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _compile(node.left, allowed), _compile(node.right, allowed)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, allowed)
        if isinstance(node.op, ast.USub):
            return lambda env: np.negative(inner(env))
        return inner
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "exp":
        if len(node.args) != 1 or node.keywords:
            raise ConfigError("exp takes exactly one argument")
        inner = _compile(node.args[0], allowed)
        return lambda env: np.exp(inner(env))
    raise ConfigError(f"unsupported syntax in expression: {ast.dump(node)[:60]}")


class Expression:
    """A parsed expression; call it with keyword arrays for its variables."""

    def __init__(self, source: str, allowed=VARIABLES):
        self.source = source.strip()
        if not self.source:
            raise ConfigError("empty expression")
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self.variables = tuple(sorted({n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
                                      - {"exp"}))
        self._fn = _compile(tree, tuple(allowed))

    def __call__(self, **env) -> np.ndarray:
        missing = [v for v in self.variables if v not in env]
        if missing:
            raise ConfigError(f"expression {self.source!r} needs {', '.join(missing)}")
        with np.errstate(all="ignore"):
            return np.asarray(self._fn(env), dtype=float)

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


def parse(source: str, allowed=VARIABLES) -> Expression:
    return Expression(source, allowed)
