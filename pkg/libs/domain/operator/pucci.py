from __future__ import annotations

from typing import Literal

import numpy as np

from domain.grid import ExteriorRule, Grid, extend
from domain.operator.quadrature import JumpQuadrature
from domain.types import FloatArray, GridFunction

Sign = Literal["+", "-"]

_CHUNK_ELEMENTS = 1_000_000


def second_differences(
    q: JumpQuadrature, grid: Grid, u: GridFunction, ext: ExteriorRule, ys: FloatArray
) -> FloatArray:
    """``delta(u, x_i, y_j)`` for every node and offset, with ``u`` extended through ``ext``."""
    x = grid.nodes
    u0 = np.asarray(u, dtype=np.float64)
    up = extend(grid, u0, ext, x[:, None, :] + ys[None, :, :])
    um = extend(grid, u0, ext, x[:, None, :] - ys[None, :, :])
    return up + um - 2.0 * u0[:, None]


def pucci_extremal(
    q: JumpQuadrature,
    grid: Grid,
    u: GridFunction,
    ext: ExteriorRule,
    sign: Sign,
    lambda_ell: float,
    Lambda_ell: float,
) -> FloatArray:
    """Extremal jump operator over kernels with ``(2-2s)lambda <= k <= (2-2s)Lambda``.

    Each second difference is split into positive and negative parts before weighting, so
    ``M-u <= I u <= M+u`` holds for every admissible kernel on the same quadrature.
    """
    if sign not in ("+", "-"):
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    lo = (2.0 - 2.0 * q.s) * lambda_ell
    hi = (2.0 - 2.0 * q.s) * Lambda_ell
    up_w, down_w = (hi, lo) if sign == "+" else (lo, hi)

    ys, ws = q.all_offsets()
    out = np.zeros(grid.n)
    step = max(1, _CHUNK_ELEMENTS // max(1, grid.n))
    for start in range(0, ys.shape[0], step):
        y = ys[start : start + step]
        w = ws[start : start + step]
        delta = second_differences(q, grid, u, ext, y)
        pos = np.maximum(delta, 0.0)
        neg = np.maximum(-delta, 0.0)
        out += ((up_w * pos - down_w * neg) * w[None, :]).sum(axis=1)
    return out
