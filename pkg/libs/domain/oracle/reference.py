from __future__ import annotations

import math
from collections.abc import Callable
from typing import Literal

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn
from scipy.special import hyp1f1

from domain.operator.quadrature import fractional_laplacian_constant
from domain.types import FloatArray

ReferenceTest = Literal["cos", "gaussian", "quadratic"]

_EPSABS = 1e-13
_EPSREL = 1e-11
_LIMIT = 400


def fourier_symbol_value(xi: float, s: float) -> float:
    """Symbol of ``(-Delta)^s`` at frequency ``xi``."""
    return abs(xi) ** (2.0 * s)


def _cos_delta_over_sq(x: float) -> Callable[[float], float]:
    # 2 cos(x) (cos y - 1) / y^2
    c = math.cos(x)
    return lambda y: -c * float(np.sinc(y / (2.0 * math.pi))) ** 2


def _gaussian_delta(x: float) -> Callable[[float], float]:
    base = 2.0 * math.exp(-x * x)

    def delta(y: float) -> float:
        sh = math.sinh(x * y)
        return base * math.expm1(-y * y + math.log1p(2.0 * sh * sh))

    return delta


def _gaussian_delta_over_sq(x: float) -> Callable[[float], float]:
    delta = _gaussian_delta(x)
    curvature = (4.0 * x * x - 2.0) * math.exp(-x * x)
    return lambda y: curvature if y < 1e-8 else delta(y) / (y * y)


def _half_line_integral(test: str, x: float, s: float, truncation: float | None) -> float:
    """``integral_0^T delta(u, x, y) y^(-1-2s) dy`` for the named test function."""
    split = 1.0 if truncation is None else min(1.0, truncation)
    p = -1.0 - 2.0 * s

    if test == "quadratic":
        if truncation is None:
            raise ValueError("the quadratic test diverges without a truncation radius")
        return 2.0 * truncation ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)

    near_fn = _cos_delta_over_sq(x) if test == "cos" else _gaussian_delta_over_sq(x)
    near, _ = integrate.quad(
        near_fn,
        0.0,
        split,
        weight="alg",
        wvar=(1.0 - 2.0 * s, 0.0),
        epsabs=_EPSABS,
        epsrel=_EPSREL,
        limit=_LIMIT,
    )
    if truncation is not None and truncation <= 1.0:
        return float(near)

    upper = math.inf if truncation is None else float(truncation)
    if test == "cos":
        c = 2.0 * math.cos(x)
        oscillating, _ = integrate.quad(
            lambda y: c * y**p, 1.0, upper, weight="cos", wvar=1.0, epsabs=_EPSABS, limit=_LIMIT
        )
        flat = (1.0 if truncation is None else 1.0 - upper ** (-2.0 * s)) / (2.0 * s)
        far = oscillating - c * flat
    else:
        delta = _gaussian_delta(x)
        far, _ = integrate.quad(
            lambda y: delta(y) * y**p, 1.0, upper, epsabs=_EPSABS, epsrel=_EPSREL, limit=_LIMIT
        )
    return float(near + far)


def fractional_laplacian_reference(
    test: ReferenceTest,
    x: float,
    s: float,
    *,
    kernel_value: float | None = None,
    truncation: float | None = None,
) -> float:
    """High-precision ``integral delta(u, x, y) K |y|^(-1-2s) dy`` in one dimension.

    ``K`` defaults to the fractional-Laplacian constant for ``cos`` and ``gaussian`` (so the
    value is ``-(-Delta)^s u(x)``) and to ``2 - 2s`` for ``quadratic``. ``truncation`` limits
    the integral to ``|y| <= truncation``; the quadratic test needs one.
    """
    if test not in ("cos", "gaussian", "quadratic"):
        raise ValueError(f"unknown reference test {test!r}; expected cos, gaussian or quadratic")
    if not 0.5 < s < 1.0:
        raise ValueError(f"s must lie in (1/2, 1), got {s}")
    standard = fractional_laplacian_constant(1, s)
    if kernel_value is None:
        kernel_value = 2.0 - 2.0 * s if test == "quadratic" else standard

    if test == "gaussian" and truncation is None:
        # (-Delta)^s exp(-x^2) = 4^s Gamma(1/2+s)/Gamma(1/2) 1F1(1/2+s; 1/2; -x^2)
        value = 4.0**s * gamma_fn(0.5 + s) / gamma_fn(0.5) * hyp1f1(0.5 + s, 0.5, -x * x)
        return -float(value) * kernel_value / standard
    return 2.0 * kernel_value * _half_line_integral(test, x, s, truncation)


def cos_symbol_reference(x: float, s: float, *, frequency: float = 1.0) -> float:
    """``-(-Delta)^s cos(frequency * x)`` from the Fourier symbol."""
    return -fourier_symbol_value(frequency, s) * math.cos(frequency * x)


def finite_difference_gradient_error(
    fn: Callable[[FloatArray], FloatArray],
    grad: Callable[[FloatArray], FloatArray],
    points: FloatArray,
    *,
    step: float = 1e-5,
) -> float:
    """Max abs gap between ``grad`` and central differences of ``fn`` at ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = pts.shape[1]
    analytic = np.asarray(grad(pts), dtype=np.float64).reshape(pts.shape)
    numeric = np.empty_like(pts)
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        hi = np.asarray(fn(pts + e), dtype=np.float64)
        lo = np.asarray(fn(pts - e), dtype=np.float64)
        numeric[:, k] = (hi - lo) / (2.0 * step)
    return float(np.max(np.abs(analytic - numeric)))


def finite_difference_hessian_error(
    grad: Callable[[FloatArray], FloatArray],
    hessian: Callable[[FloatArray], FloatArray],
    points: FloatArray,
    *,
    step: float = 1e-5,
) -> float:
    """Same as :func:`finite_difference_gradient_error` one derivative up."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = pts.shape[1]
    analytic = np.asarray(hessian(pts), dtype=np.float64).reshape(pts.shape[0], d, d)
    numeric = np.empty_like(analytic)
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        hi = np.asarray(grad(pts + e), dtype=np.float64).reshape(pts.shape)
        lo = np.asarray(grad(pts - e), dtype=np.float64).reshape(pts.shape)
        numeric[:, :, k] = (hi - lo) / (2.0 * step)
    return float(np.max(np.abs(analytic - numeric)))
