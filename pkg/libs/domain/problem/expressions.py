"""Coefficient fields written as strings in run configs.

Grammar: arithmetic on the coordinates ``x1``, ``x2`` (``y1``, ``y2`` for kernels), the
radii ``r = |x|`` and ``ry = |y|``, numeric literals, ``pi``, ``^``/``**`` for powers,
and the functions ``sin cos exp sqrt abs log``. Anything else is rejected.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from domain.errors import ExpressionError
from domain.types import FloatArray

from .model import LyapunovData

_FUNCTIONS: dict[str, Any] = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
    "log": sp.log,
    "pi": sp.pi,
}
_GLOBALS: dict[str, Any] = {
    "Integer": sp.Integer,
    "Float": sp.Float,
    "Rational": sp.Rational,
    "Symbol": sp.Symbol,
}
_TRANSFORMS = (*standard_transformations, convert_xor)


def _coords(prefix: str, d: int) -> tuple[sp.Symbol, ...]:
    return tuple(sp.Symbol(f"{prefix}{i + 1}", real=True) for i in range(d))


def _parse(text: str, names: dict[str, sp.Expr], allowed: set[sp.Symbol]) -> sp.Expr:
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    if "__" in text or any(ch in text for ch in ";:=[]{}'\"\\"):
        raise ExpressionError(f"illegal characters in expression {text!r}")
    local = {**_FUNCTIONS, **names}
    try:
        expr = parse_expr(
            text, local_dict=local, global_dict=dict(_GLOBALS), transformations=_TRANSFORMS
        )
    except Exception as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from exc
    if not isinstance(expr, sp.Expr):
        raise ExpressionError(f"{text!r} is not a scalar expression")
    stray = expr.free_symbols - allowed
    if stray:
        raise ExpressionError(f"unknown names {sorted(map(str, stray))} in {text!r}")
    return expr


def _state_names(d: int) -> tuple[tuple[sp.Symbol, ...], dict[str, sp.Expr]]:
    xs = _coords("x", d)
    names: dict[str, sp.Expr] = {str(s): s for s in xs}
    names["r"] = sp.sqrt(sum(s**2 for s in xs))
    return xs, names


@dataclass(frozen=True)
class CompiledScalar:
    """x ↦ expr(x) for points of shape (..., d)."""

    expr: sp.Expr
    d: int
    _fn: Callable[..., Any] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_fn", sp.lambdify(_coords("x", self.d), self.expr, "numpy"))

    def __call__(self, x: FloatArray) -> FloatArray:
        cols = [x[..., i] for i in range(self.d)]
        return np.broadcast_to(np.asarray(self._fn(*cols), dtype=np.float64), x.shape[:-1])


@dataclass(frozen=True)
class CompiledVector:
    components: tuple[CompiledScalar, ...]

    def __call__(self, x: FloatArray) -> FloatArray:
        return np.stack([c(x) for c in self.components], axis=-1)


@dataclass(frozen=True)
class CompiledMatrix:
    rows: tuple[tuple[CompiledScalar, ...], ...]

    def __call__(self, x: FloatArray) -> FloatArray:
        return np.stack([np.stack([c(x) for c in row], axis=-1) for row in self.rows], axis=-2)


@dataclass(frozen=True)
class CompiledKernel:
    """(x, y) ↦ expr(x, y); x and y broadcast against each other."""

    expr: sp.Expr
    d: int
    _fn: Callable[..., Any] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        args = (*_coords("x", self.d), *_coords("y", self.d))
        object.__setattr__(self, "_fn", sp.lambdify(args, self.expr, "numpy"))

    def __call__(self, x: FloatArray, y: FloatArray) -> FloatArray:
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        cols = [x[..., i] for i in range(self.d)] + [y[..., i] for i in range(self.d)]
        return np.broadcast_to(np.asarray(self._fn(*cols), dtype=np.float64), shape)


def parse_scalar(text: str, d: int) -> CompiledScalar:
    xs, names = _state_names(d)
    return CompiledScalar(_parse(text, names, set(xs)), d)


def parse_vector(texts: Sequence[str], d: int) -> CompiledVector:
    if len(texts) != d:
        raise ExpressionError(f"expected {d} components, got {len(texts)}")
    return CompiledVector(tuple(parse_scalar(t, d) for t in texts))


def parse_matrix(rows: Sequence[Sequence[str]], d: int) -> CompiledMatrix:
    if len(rows) != d or any(len(row) != d for row in rows):
        raise ExpressionError(f"expected a {d}x{d} matrix")
    return CompiledMatrix(tuple(tuple(parse_scalar(t, d) for t in row) for row in rows))


def parse_kernel(text: str, d: int) -> CompiledKernel:
    xs, names = _state_names(d)
    ys = _coords("y", d)
    names.update({str(s): s for s in ys})
    names["ry"] = sp.sqrt(sum(s**2 for s in ys))
    return CompiledKernel(_parse(text, names, set(xs) | set(ys)), d)


def lyapunov_from_expressions(
    V: str,
    h: str,
    d: int,
    *,
    k0: float = 1.0,
    mu: float = 0.0,
    envelope_exponent: float | None = None,
    growth_exponent: float | None = None,
) -> LyapunovData:
    """Lyapunov data whose gradient and Hessian come from symbolic differentiation of V."""
    xs, names = _state_names(d)
    v_expr = _parse(V, names, set(xs))
    grad = CompiledVector(tuple(CompiledScalar(sp.diff(v_expr, s), d) for s in xs))
    hess = CompiledMatrix(
        tuple(tuple(CompiledScalar(sp.diff(v_expr, a, b), d) for b in xs) for a in xs)
    )
    return LyapunovData(
        V=CompiledScalar(v_expr, d),
        grad=grad,
        hessian=hess,
        h=parse_scalar(h, d),
        k0=k0,
        mu=mu,
        envelope_exponent=envelope_exponent,
        growth_exponent=growth_exponent,
    )
