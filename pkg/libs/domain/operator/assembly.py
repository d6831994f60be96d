from __future__ import annotations

import logging
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import sparse

from domain.errors import (
    MonotonicityError,
    ProblemValidationError,
    QuadratureError,
    UnknownControlError,
)
from domain.grid import ExteriorRule, Grid
from domain.operator.quadrature import JumpQuadrature, lattice_offsets
from domain.problem.model import (
    COMPENSATOR_RADIUS,
    ControlProblem,
    eval_kernel,
    eval_matrix,
)
from domain.types import FloatArray, GridFunction, IntArray

log = logging.getLogger(__name__)

_CHUNK_ELEMENTS = 1_000_000
_DOMINANCE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Assembled per-control stencils on a grid.

    ``matrices[t] @ u + constants[t]`` is ``L_t u + c_t u + g_t`` at the nodes, with exterior
    values already folded in according to ``exterior``.
    """

    grid: Grid
    controls: tuple[str, ...]
    exterior: ExteriorRule
    matrices: tuple[sparse.csr_matrix, ...]
    cost: FloatArray
    exterior_constant: FloatArray
    exterior_mass: FloatArray
    zeroth: FloatArray
    problem_name: str = "custom"

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def constants(self) -> FloatArray:
        return self.cost + self.exterior_constant

    @property
    def row_sums(self) -> FloatArray:
        """``M_t 1`` per control and node: zeroth coefficient minus the mass sent outside."""
        return self.zeroth - self.exterior_mass

    def index(self, tau: str | int) -> int:
        if isinstance(tau, int | np.integer):
            if 0 <= int(tau) < len(self.controls):
                return int(tau)
            raise UnknownControlError(tau)
        try:
            return self.controls.index(tau)
        except ValueError:
            raise UnknownControlError(tau) from None

    def policy_system(self, policy: IntArray) -> tuple[sparse.csr_matrix, FloatArray, FloatArray]:
        """Rows of the frozen-policy system: (matrix, constant, row sums)."""
        pol = np.asarray(policy, dtype=np.int64)
        rows = np.arange(self.n)
        A = sparse.csr_matrix((self.n, self.n))
        for t, M in enumerate(self.matrices):
            mask = (pol == t).astype(np.float64)
            if mask.any():
                A = A + sparse.diags(mask) @ M
        return A.tocsr(), self.constants[pol, rows], self.row_sums[pol, rows]

    def with_exterior_constant(self, constant: FloatArray) -> DiscreteOperator:
        """Same stencils with a replaced exterior constant (fixed rules only)."""
        return DiscreteOperator(
            grid=self.grid,
            controls=self.controls,
            exterior=self.exterior,
            matrices=self.matrices,
            cost=self.cost,
            exterior_constant=np.asarray(constant, dtype=np.float64),
            exterior_mass=self.exterior_mass,
            zeroth=self.zeroth,
            problem_name=self.problem_name,
        )


@dataclass
class _RowBlock:
    rows: list[IntArray]
    cols: list[IntArray]
    vals: list[FloatArray]
    diag: FloatArray
    ext_constant: FloatArray
    ext_mass: FloatArray


@dataclass(frozen=True)
class _Context:
    problem: ControlProblem
    grid: Grid
    quadrature: JumpQuadrature | None
    exterior: ExteriorRule
    tau: str
    levy_offsets: FloatArray | None


def _chunks(n: int, size: int) -> Iterator[slice]:
    for lo in range(0, n, size):
        yield slice(lo, min(n, lo + size))


def _couple(
    ctx: _Context,
    block: _RowBlock,
    sl: slice,
    offsets: FloatArray,
    weights: FloatArray,
) -> None:
    """Send ``weights[i, j]`` from node ``sl.start + i`` to the point ``x_i + offsets[j]``."""
    grid = ctx.grid
    x = grid.nodes[sl]
    rows = np.arange(sl.start, sl.stop)
    negative = weights < 0.0
    if np.any(negative):
        i, j = np.argwhere(negative)[0]
        raise MonotonicityError(
            int(rows[i]), ctx.tau, tuple(float(v) for v in offsets[j]), float(weights[i, j])
        )
    block.diag -= weights.sum(axis=1)

    targets = x[:, None, :] + offsets[None, :, :]
    idx, outside = grid.resolve(targets)
    live = weights > 0.0

    inside = live & ~outside
    if np.any(inside):
        r, c = np.nonzero(inside)
        block.rows.append(rows[r])
        block.cols.append(idx[r, c])
        block.vals.append(weights[r, c])

    ext = live & outside
    if not np.any(ext):
        return
    r, c = np.nonzero(ext)
    w = weights[r, c]
    pts = targets[r, c]
    rule = ctx.exterior
    if rule.kind == "nearest":
        block.rows.append(rows[r])
        block.cols.append(grid.project(pts))
        block.vals.append(w)
        return
    np.add.at(block.ext_mass, r, w)
    if rule.kind == "function":
        np.add.at(block.ext_constant, r, w * rule.values(pts))


def _assemble_rows(ctx: _Context, sl: slice) -> _RowBlock:
    p = ctx.problem
    grid = ctx.grid
    h = grid.hx
    d = grid.d
    x = grid.nodes[sl]
    nloc = x.shape[0]
    block = _RowBlock([], [], [], np.zeros(nloc), np.zeros(nloc), np.zeros(nloc))

    if p.kernel is not None and ctx.quadrature is not None:
        factor = p.kernel.factor(ctx.tau)
        ys, ws = ctx.quadrature.all_offsets()
        step = max(1, _CHUNK_ELEMENTS // max(1, nloc))
        for lo in range(0, ys.shape[0], step):
            y = ys[lo : lo + step]
            kp = eval_kernel(factor, x[:, None, :], y[None, :, :])
            km = eval_kernel(factor, x[:, None, :], -y[None, :, :])
            _couple(ctx, block, sl, y, (kp + km) * ws[lo : lo + step][None, :])

    b = p.drift_at(ctx.tau, x)
    mixed = p.mixed
    if mixed is not None and mixed.levy is not None and ctx.levy_offsets is not None:
        y = ctx.levy_offsets
        omega = eval_kernel(mixed.levy[ctx.tau], x[:, None, :], y[None, :, :]) * h**d
        small = np.linalg.norm(y, axis=1) < COMPENSATOR_RADIUS
        b = b - (omega[:, small, None] * y[None, small, :]).sum(axis=1)
        _couple(ctx, block, sl, y, omega)

    if mixed is not None:
        a = eval_matrix(mixed.diffusion[ctx.tau], x)
        if d == 1:
            axis = np.array([[h], [-h]])
            w = np.repeat(a[:, 0, 0, None] / (h * h), 2, axis=1)
            _couple(ctx, block, sl, axis, w)
        else:
            a12 = a[:, 0, 1]
            eye = np.eye(2) * h
            axis = np.concatenate([eye, -eye])
            diag_part = np.stack([a[:, 0, 0], a[:, 1, 1], a[:, 0, 0], a[:, 1, 1]], axis=1)
            w_axis = (diag_part - np.abs(a12)[:, None]) / (h * h)
            cross = np.array([[h, h], [-h, -h], [h, -h], [-h, h]])
            plus = np.maximum(a12, 0.0) / (h * h)
            minus = np.maximum(-a12, 0.0) / (h * h)
            w_cross = np.stack([plus, plus, minus, minus], axis=1)
            _couple(ctx, block, sl, axis, w_axis)
            _couple(ctx, block, sl, cross, w_cross)

    eye = np.eye(d) * h
    axis = np.concatenate([eye, -eye])
    w_drift = np.concatenate([np.maximum(b, 0.0), np.maximum(-b, 0.0)], axis=1) / h
    _couple(ctx, block, sl, axis, w_drift)
    return block


def _check_dominance(p: ControlProblem, grid: Grid) -> None:
    if p.mixed is None or grid.d == 1:
        return
    for tau in p.controls:
        a = eval_matrix(p.mixed.diffusion[tau], grid.nodes)
        excess = np.abs(a[:, 0, 1]) - np.minimum(a[:, 0, 0], a[:, 1, 1])
        bad = np.nonzero(excess > _DOMINANCE_SLACK * np.maximum(1.0, np.abs(a[:, 0, 1])))[0]
        if bad.size:
            i = int(bad[0])
            raise ProblemValidationError(
                f"diffusion of control {tau!r} is not diagonally dominant at node {i} "
                f"(x={grid.nodes[i].tolist()}); the monotone stencil requires |a12| <= a_ii"
            )


def assemble(
    p: ControlProblem,
    grid: Grid,
    q: JumpQuadrature | None,
    ext: ExteriorRule,
    *,
    workers: int = 1,
    levy_radius: float | None = None,
) -> DiscreteOperator:
    """Build the monotone stencils of every control on ``grid``.

    Jump weights use the symmetrised kernel, drift is upwinded, the Lévy compensator is folded
    into the drift, and exterior targets are resolved through ``ext``.
    """
    if p.d != grid.d:
        raise ProblemValidationError(f"problem is {p.d}-dimensional but the grid is {grid.d}-d")
    if p.kernel is not None:
        if q is None:
            raise QuadratureError("problem has a jump kernel but no quadrature was given")
        if q.d != grid.d or abs(q.hx - grid.hx) > 1e-15 * grid.hx:
            raise QuadratureError("quadrature was built for a different lattice")
        if abs(q.s - p.kernel.s) > 1e-15:
            raise QuadratureError(f"quadrature order s={q.s} differs from kernel s={p.kernel.s}")
    _check_dominance(p, grid)

    levy_offsets = None
    if p.mixed is not None and p.mixed.levy is not None:
        radius = levy_radius if levy_radius is not None else grid.radius + 1.0
        levy_offsets, _ = lattice_offsets(grid, radius)

    n = grid.n
    size = max(1, min(n, _CHUNK_ELEMENTS // max(1, q.m if q is not None else 16)))
    matrices: list[sparse.csr_matrix] = []
    cost = np.empty((len(p.controls), n))
    zeroth = np.empty((len(p.controls), n))
    ext_constant = np.zeros((len(p.controls), n))
    ext_mass = np.zeros((len(p.controls), n))

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t, tau in enumerate(p.controls):
            ctx = _Context(p, grid, q, ext, tau, levy_offsets)
            slices = list(_chunks(n, size))
            if pool is not None:
                blocks = list(pool.map(partial(_assemble_rows, ctx), slices))
            else:
                blocks = [_assemble_rows(ctx, sl) for sl in slices]

            c = p.zeroth_at(tau, grid.nodes)
            diag = np.concatenate([blk.diag for blk in blocks]) + c
            rows = [r for blk in blocks for r in blk.rows] + [np.arange(n)]
            cols = [k for blk in blocks for k in blk.cols] + [np.arange(n)]
            vals = [v for blk in blocks for v in blk.vals] + [diag]
            M = sparse.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n, n),
            ).tocsr()
            M.sum_duplicates()
            matrices.append(M)

            cost[t] = p.cost_at(tau, grid.nodes)
            zeroth[t] = c
            ext_constant[t] = np.concatenate([blk.ext_constant for blk in blocks])
            ext_mass[t] = np.concatenate([blk.ext_mass for blk in blocks])
            log.debug("assembled control %s: %d nonzeros", tau, M.nnz)
    finally:
        if pool is not None:
            pool.shutdown()

    return DiscreteOperator(
        grid=grid,
        controls=tuple(p.controls),
        exterior=ext,
        matrices=tuple(matrices),
        cost=cost,
        exterior_constant=ext_constant,
        exterior_mass=ext_mass,
        zeroth=zeroth,
        problem_name=p.name,
    )


def apply(opr: DiscreteOperator, tau: str | int, u: GridFunction) -> FloatArray:
    """``L_t u + c_t u + g_t`` at every node."""
    t = opr.index(tau)
    vec = np.asarray(u, dtype=np.float64)
    return np.asarray(opr.matrices[t] @ vec) + opr.constants[t]


def apply_all(opr: DiscreteOperator, u: GridFunction) -> FloatArray:
    return np.stack([apply(opr, t, u) for t in range(len(opr.controls))])


def apply_inf(opr: DiscreteOperator, u: GridFunction) -> tuple[FloatArray, IntArray]:
    """Pointwise minimum over controls and the argmin policy (lowest index on ties)."""
    values = apply_all(opr, u)
    policy = np.argmin(values, axis=0)
    return values[policy, np.arange(opr.n)], policy


def apply_inf_anchored(
    opr: DiscreteOperator, w_relative: GridFunction, anchor: float
) -> tuple[FloatArray, IntArray]:
    """``apply_inf`` at ``w_relative + anchor`` without forming the sum.

    The constant part enters through the analytic row sums, which keeps the residual exact
    when ``anchor`` is much larger than the variation of ``w_relative``.
    """
    rel = np.asarray(w_relative, dtype=np.float64)
    values = np.stack(
        [
            np.asarray(M @ rel) + anchor * opr.row_sums[t] + opr.constants[t]
            for t, M in enumerate(opr.matrices)
        ]
    )
    policy = np.argmin(values, axis=0)
    return values[policy, np.arange(opr.n)], policy
