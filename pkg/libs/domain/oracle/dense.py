"""Brute-force reference operators for tiny grids.

Everything here is written as plain loops over nodes and offsets so that it shares no
vectorised code path with :mod:`domain.operator.assembly`. Slow on purpose.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from domain.errors import ContractionError, OracleSizeError
from domain.grid import ExteriorRule, Grid
from domain.operator.quadrature import JumpQuadrature
from domain.problem.model import COMPENSATOR_RADIUS, ControlProblem
from domain.types import FloatArray, GridFunction, KernelFactor

MAX_NODES = 200


@dataclass(frozen=True, eq=False)
class DenseOracle:
    """``matrix @ u + constant`` is ``L_t u + c_t u + g_t`` for one control."""

    control: str
    matrix: FloatArray
    constant: FloatArray

    @property
    def n(self) -> int:
        return int(self.constant.shape[0])


def _node_table(grid: Grid) -> dict[tuple[int, ...], int]:
    return {tuple(int(v) for v in row): i for i, row in enumerate(grid.index)}


class _Sink:
    """Accumulates one dense row, resolving targets against the lattice by hand."""

    def __init__(self, grid: Grid, rule: ExteriorRule, table: dict[tuple[int, ...], int]) -> None:
        self.grid = grid
        self.rule = rule
        self.table = table
        self.matrix = np.zeros((grid.n, grid.n))
        self.constant = np.zeros(grid.n)

    def send(self, i: int, point: FloatArray, weight: float) -> None:
        if weight == 0.0:
            return
        self.matrix[i, i] -= weight
        g = self.grid
        key = tuple(int(round(float(c) / g.hx)) for c in point)
        on_lattice = all(
            abs(float(c) - k * g.hx) <= 1e-9 * g.hx for c, k in zip(point, key, strict=True)
        )
        inside = float(np.sqrt(np.sum(point * point))) <= g.radius * (1.0 + 1e-12)
        if inside and on_lattice and key in self.table:
            self.matrix[i, self.table[key]] += weight
            return
        if inside:
            self.matrix[i, int(g.project(point[None, :])[0])] += weight
            return
        if self.rule.kind == "nearest":
            self.matrix[i, int(g.project(point[None, :])[0])] += weight
        elif self.rule.kind == "function":
            self.constant[i] += weight * float(self.rule.values(point[None, :])[0])


def _scalar(fn: KernelFactor, x: FloatArray, y: FloatArray) -> float:
    return float(np.asarray(fn(x, y)).reshape(-1)[0])


def build_dense_oracle(
    p: ControlProblem,
    grid: Grid,
    q: JumpQuadrature | None,
    ext: ExteriorRule,
    tau: str,
    *,
    levy_radius: float | None = None,
) -> DenseOracle:
    """Re-sum the stencil of control ``tau`` node by node into a dense matrix."""
    if grid.n > MAX_NODES:
        raise OracleSizeError(f"dense oracle is capped at {MAX_NODES} nodes, grid has {grid.n}")
    h = grid.hx
    d = grid.d
    sink = _Sink(grid, ext, _node_table(grid))
    axes = [np.eye(d)[k] * h for k in range(d)]

    jump_y: list[FloatArray] = []
    jump_w: list[float] = []
    if p.kernel is not None and q is not None:
        ys, ws = q.all_offsets()
        jump_y = [ys[j] for j in range(ys.shape[0])]
        jump_w = [float(w) for w in ws]

    levy_y: list[FloatArray] = []
    if p.mixed is not None and p.mixed.levy is not None:
        radius = levy_radius if levy_radius is not None else grid.radius + 1.0
        reach = int(np.floor(radius / h + 1e-9))
        for multi in np.ndindex(*([2 * reach + 1] * d)):
            k = np.array(multi, dtype=np.float64) - reach
            if np.any(k != 0.0) and float(np.sum(k * k)) * h * h <= radius * radius * (1 + 1e-12):
                levy_y.append(k * h)

    for i in range(grid.n):
        x = grid.nodes[i]
        xb = x[None, :]
        if p.kernel is not None:
            factor = p.kernel.factor(tau)
            for y, w in zip(jump_y, jump_w, strict=True):
                pair = _scalar(factor, xb, y[None, :]) + _scalar(factor, xb, -y[None, :])
                sink.send(i, x + y, pair * w)

        b = np.asarray(p.drift_at(tau, xb), dtype=np.float64).reshape(d).copy()
        if p.mixed is not None:
            if p.mixed.levy is not None:
                K = p.mixed.levy[tau]
                for y in levy_y:
                    omega = _scalar(K, xb, y[None, :]) * h**d
                    if float(np.sqrt(np.sum(y * y))) < COMPENSATOR_RADIUS:
                        b -= omega * y
                    sink.send(i, x + y, omega)
            a = np.asarray(p.mixed.diffusion[tau](xb), dtype=np.float64).reshape(d, d)
            if d == 1:
                sink.send(i, x + axes[0], a[0, 0] / (h * h))
                sink.send(i, x - axes[0], a[0, 0] / (h * h))
            else:
                a12 = a[0, 1]
                for k in range(2):
                    w_axis = (a[k, k] - abs(a12)) / (h * h)
                    sink.send(i, x + axes[k], w_axis)
                    sink.send(i, x - axes[k], w_axis)
                diag_pair = axes[0] + axes[1]
                anti_pair = axes[0] - axes[1]
                for pair, w_cross in ((diag_pair, max(a12, 0.0)), (anti_pair, max(-a12, 0.0))):
                    sink.send(i, x + pair, w_cross / (h * h))
                    sink.send(i, x - pair, w_cross / (h * h))

        for k in range(d):
            if b[k] > 0.0:
                sink.send(i, x + axes[k], b[k] / h)
            elif b[k] < 0.0:
                sink.send(i, x - axes[k], -b[k] / h)

        sink.matrix[i, i] += float(p.zeroth_at(tau, xb)[0])
        sink.constant[i] += float(p.cost_at(tau, xb)[0])

    return DenseOracle(control=tau, matrix=sink.matrix, constant=sink.constant)


def dense_oracles(
    p: ControlProblem, grid: Grid, q: JumpQuadrature | None, ext: ExteriorRule
) -> tuple[DenseOracle, ...]:
    return tuple(build_dense_oracle(p, grid, q, ext, tau) for tau in p.controls)


def dense_apply(oracle: DenseOracle, u: GridFunction) -> FloatArray:
    vec = np.asarray(u, dtype=np.float64)
    if vec.shape[0] > MAX_NODES:
        raise OracleSizeError(f"dense oracle is capped at {MAX_NODES} nodes")
    out = oracle.constant.copy()
    for i in range(oracle.n):
        acc = 0.0
        for j in range(oracle.n):
            acc += oracle.matrix[i, j] * vec[j]
        out[i] += acc
    return out


def contraction_factor(oracles: Sequence[DenseOracle], eta: float) -> float:
    """Lipschitz constant in sup norm of ``u -> u + eta * min_t (A_t u + c_t)``."""
    worst = 0.0
    for o in oracles:
        step = np.eye(o.n) + eta * o.matrix
        worst = max(worst, float(np.max(np.abs(step).sum(axis=1))))
    return worst


def dense_fixed_point(
    oracles: Sequence[DenseOracle],
    tol: float = 1e-10,
    *,
    eta: float | None = None,
    max_iter: int = 500_000,
) -> FloatArray:
    """Damped iteration ``u <- u + eta * min_t(A_t u + c_t)`` down to residual ``tol``."""
    if not oracles:
        raise ValueError("need at least one control")
    if eta is None:
        diag = max(float(np.max(np.abs(np.diag(o.matrix)))) for o in oracles)
        eta = 1.0 / diag if diag > 0.0 else 1.0
    factor = contraction_factor(oracles, eta)
    if not factor < 1.0:
        raise ContractionError(f"contraction factor {factor:.6f} >= 1 for eta={eta:.3e}")

    u = np.zeros(oracles[0].n)
    for _ in range(max_iter):
        values = np.min(np.stack([o.matrix @ u + o.constant for o in oracles]), axis=0)
        if float(np.max(np.abs(values))) <= tol:
            return u
        u = u + eta * values
    raise ContractionError(f"no convergence to {tol:.1e} within {max_iter} damped steps")
