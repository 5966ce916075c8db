"""Compile restricted expression strings from scenario configs into callables.

State variables are named ``x1 .. xn``.  Only arithmetic, comparisons,
boolean operators, and a small whitelist of math names are available; the
builtins are stripped so config files cannot reach into the interpreter.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = ["ExpressionError", "scalar_fn", "vector_fn", "predicate_fn"]

_NAMESPACE = {
    "abs": abs,
    "min": min,
    "max": max,
    "sqrt": math.sqrt,
    "exp": math.exp,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "tanh": math.tanh,
    "floor": math.floor,
    "ceil": math.ceil,
    "pi": math.pi,
    "e": math.e,
}


class ExpressionError(ValueError):
    """Raised when a config expression cannot be compiled."""


def _compile(expression: str, dimension: int, what: str) -> Callable:
    if not isinstance(expression, str) or not expression.strip():
        raise ExpressionError(f"{what} must be a nonempty string, got {expression!r}")
    args = ", ".join(f"x{i + 1}" for i in range(dimension))
    source = f"lambda {args}: ({expression})"
    # the namespace must live in the globals dict: that is where the lambda
    # body resolves free names when it is eventually called
    namespace = {"__builtins__": {}, **_NAMESPACE}
    try:
        fn = eval(compile(source, f"<{what}>", "eval"), namespace)
    except SyntaxError as exc:
        raise ExpressionError(f"invalid {what} {expression!r}: {exc.msg}") from None
    # Probe once so unknown names surface at load time, not mid-run.
    try:
        fn(*([0.0] * dimension))
    except NameError as exc:
        raise ExpressionError(f"unknown name in {what} {expression!r}: {exc}") from None
    except Exception:
        pass  # runtime-domain issues (log(0) etc.) are the caller's concern
    return fn


def scalar_fn(expression: str, dimension: int) -> Callable[[Sequence[float]], float]:
    """Compile an expression into ``f(x) -> float`` with x a length-n vector."""
    fn = _compile(expression, dimension, "scalar expression")

    def wrapped(x):
        return float(fn(*x))

    wrapped.expression = expression
    return wrapped


def predicate_fn(expression: str, dimension: int) -> Callable[[Sequence[float]], bool]:
    """Compile an expression into ``p(x) -> bool``."""
    fn = _compile(expression, dimension, "predicate")

    def wrapped(x):
        return bool(fn(*x))

    wrapped.expression = expression
    return wrapped


def vector_fn(expressions: Sequence[str], dimension: int) -> Callable[[Sequence[float]], np.ndarray]:
    """Compile a list of component expressions into ``f(x) -> ndarray``."""
    fns = [_compile(e, dimension, "vector component") for e in expressions]

    def wrapped(x):
        return np.array([f(*x) for f in fns], dtype=float)

    wrapped.expressions = list(expressions)
    return wrapped
