"""A closed expression grammar for data and sources.

Expressions use the variables ``x``, ``y``, ``s`` (boundary arc parameter)
and ``theta`` (polar angle), numeric constants, ``pi``, the operators
``+ - * /`` and unary minus, and the functions ``abs``, ``min``, ``max`` and
``sqrt``.  They are parsed with :mod:`ast` and compiled into a numpy
evaluator; anything outside the grammar is rejected.
"""

import ast

import numpy as np

VARIABLES = ("x", "y", "s", "theta")
_CONSTANTS = {"pi": np.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}
_FUNCS = {
    "abs": (np.abs, 1),
    "sqrt": (np.sqrt, 1),
    "min": (np.minimum, None),
    "max": (np.maximum, None),
}


class ExpressionError(ValueError):
    """Raised for text outside the expression grammar."""


def _compile(node, text):
    if isinstance(node, ast.Expression):
        return _compile(node.body, text)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        c = float(node.value)
        return lambda env: c
    if isinstance(node, ast.Name):
        if node.id in VARIABLES:
            name = node.id
            return lambda env: env[name]
        if node.id in _CONSTANTS:
            c = _CONSTANTS[node.id]
            return lambda env: c
        raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        a, b = _compile(node.left, text), _compile(node.right, text)
        return lambda env: op(a(env), b(env))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        a = _compile(node.operand, text)
        if isinstance(node.op, ast.USub):
            return lambda env: np.negative(a(env))
        return a
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in _FUNCS and not node.keywords:
        fn, arity = _FUNCS[node.func.id]
        args = [_compile(a, text) for a in node.args]
        if arity is not None and len(args) != arity:
            raise ExpressionError(f"{node.func.id} takes {arity} argument in {text!r}")
        if arity is None and len(args) < 2:
            raise ExpressionError(f"{node.func.id} takes at least 2 arguments in {text!r}")
        if arity == 1:
            return lambda env: fn(args[0](env))

        def reduce(env):
            out = args[0](env)
            for a in args[1:]:
                out = fn(out, a(env))
            return out
        return reduce
    raise ExpressionError(f"unsupported syntax {ast.dump(node)[:40]!r} in {text!r}")


def compile_expression(text):
    """Compile ``text`` into ``f(env) -> array``; ``env`` maps variable names to arrays."""
    if not isinstance(text, str):
        raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _compile(tree, text)


def polar_angle(points, cut=-np.pi):
    """Angle of each point in ``[cut, cut + 2 pi)``."""
    p = np.asarray(points, dtype=float)
    t = np.arctan2(p[..., 1], p[..., 0])
    out = cut + np.mod(t - cut, 2 * np.pi)
    # points on the cut itself land on its lower end
    return np.where(np.isclose(out, cut + 2 * np.pi, rtol=0, atol=1e-12), cut, out)


def evaluate(fn, points, arc=None, cut=-np.pi):
    """Evaluate a compiled expression on ``points`` (shape (..., 2))."""
    p = np.asarray(points, dtype=float)
    env = {
        "x": p[..., 0],
        "y": p[..., 1],
        "s": np.zeros(p.shape[:-1]) if arc is None else np.asarray(arc, dtype=float),
        "theta": polar_angle(p, cut),
    }
    with np.errstate(divide="ignore", invalid="ignore"):
        out = fn(env)
    return np.broadcast_to(np.asarray(out, dtype=float), p.shape[:-1]).copy()
