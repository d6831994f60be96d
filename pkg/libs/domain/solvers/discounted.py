from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from domain.errors import MissingLyapunovDataError, ProblemValidationError
from domain.grid import Grid
from domain.operator.assembly import DiscreteOperator, apply_inf_anchored
from domain.problem.model import ControlProblem, eval_scalar
from domain.solvers.linear import LinearMethod, solve_anchored
from domain.types import FloatArray, IntArray
from ports.trace import ConvergenceTracePort
from shared.contracts.v1.reports import TraceRow

log = logging.getLogger(__name__)

_MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class RadiusStep:
    radius: float
    nodes: int
    change: float | None
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class DiscountedSolution:
    """Discrete solution stored as ``w = w_relative + w_origin`` with ``w_relative[origin] = 0``."""

    grid: Grid
    w_relative: FloatArray
    w_origin: float
    policy: IntArray
    residual_inf_norm: float
    iterations: int
    converged: bool
    alpha: float | None = None
    diagnostics: Mapping[str, Any] = field(default_factory=dict)
    radius_trace: tuple[RadiusStep, ...] = ()

    @property
    def w(self) -> FloatArray:
        return self.w_relative + self.w_origin

    @property
    def lambda_alpha(self) -> float | None:
        return None if self.alpha is None else self.alpha * self.w_origin

    def with_radius_trace(
        self, trace: tuple[RadiusStep, ...], **diagnostics: Any
    ) -> DiscountedSolution:
        return DiscountedSolution(
            grid=self.grid,
            w_relative=self.w_relative,
            w_origin=self.w_origin,
            policy=self.policy,
            residual_inf_norm=self.residual_inf_norm,
            iterations=self.iterations,
            converged=self.converged,
            alpha=self.alpha,
            diagnostics={**self.diagnostics, **diagnostics},
            radius_trace=trace,
        )


def _split(w: FloatArray, origin: int) -> tuple[FloatArray, float]:
    anchor = float(w[origin])
    rel = np.asarray(w, dtype=np.float64) - anchor
    rel[origin] = 0.0
    return rel, anchor


def _value_iteration(
    opr: DiscreteOperator,
    rel: FloatArray,
    anchor: float,
    tol: float,
    steps: int,
) -> tuple[FloatArray, float, int]:
    """Damped pointwise fixed point ``w <- w + eta * inf(L w + c w + g)``."""
    diag = np.max(np.abs(np.stack([M.diagonal() for M in opr.matrices])))
    eta = 1.0 / diag if diag > 0.0 else 1.0
    origin = opr.grid.origin_index
    w = rel + anchor
    for k in range(1, steps + 1):
        rel_k, anchor_k = _split(w, origin)
        values, _ = apply_inf_anchored(opr, rel_k, anchor_k)
        if float(np.max(np.abs(values))) <= tol:
            return rel_k, anchor_k, k
        w = w + eta * values
    rel_k, anchor_k = _split(w, origin)
    return rel_k, anchor_k, steps


def solve_policy_iteration(
    opr: DiscreteOperator,
    tol: float,
    max_iter: int,
    *,
    w0: FloatArray | None = None,
    policy0: IntArray | None = None,
    trace: ConvergenceTracePort | None = None,
    linear: LinearMethod = "auto",
    value_iteration_fallback: bool = True,
    value_iteration_steps: int = 20_000,
    alpha: float | None = None,
    radius: float | None = None,
    stage: str = "policy-iteration",
) -> DiscountedSolution:
    """Howard iteration on ``inf_t(M_t w + g_t) = 0`` with exterior data folded into ``opr``.

    Each frozen-policy system is solved for ``(w - w(origin), w(origin))``; the policy is
    switched only where another control is strictly better, which rules out cycling on ties.
    Non-convergence is reported through ``converged``, never raised.
    """
    n = opr.n
    origin = opr.grid.origin_index
    rows = np.arange(n)
    lin_tol = tol / 10.0

    if w0 is not None:
        rel, anchor = _split(np.asarray(w0, dtype=np.float64), origin)
    else:
        rel, anchor = np.zeros(n), 0.0
    if policy0 is not None:
        policy = np.asarray(policy0, dtype=np.int64).copy()
    else:
        _, policy = apply_inf_anchored(opr, rel, anchor)

    monotone_violations = 0
    prev_w: FloatArray | None = None
    residual = float("inf")
    converged = False
    method = linear
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        A, b, a = opr.policy_system(policy)
        x0 = (rel, anchor) if it > 1 or w0 is not None else None
        solved = solve_anchored(A, b, a, origin, tol=lin_tol, method=linear, x0=x0)
        rel, anchor = solved.relative, solved.anchor
        method = solved.method

        w = rel + anchor
        if prev_w is not None:
            rise = w - prev_w
            if np.any(rise > _MONOTONE_SLACK * (1.0 + np.abs(prev_w))):
                monotone_violations += 1
        prev_w = w

        values_all = np.stack(
            [
                np.asarray(M @ rel) + anchor * opr.row_sums[t] + opr.constants[t]
                for t, M in enumerate(opr.matrices)
            ]
        )
        best = np.argmin(values_all, axis=0)
        current = values_all[policy, rows]
        scale = 1e-13 * (1.0 + np.abs(current))
        improve = values_all[best, rows] < current - scale
        changes = int(improve.sum())
        policy = np.where(improve, best, policy)
        residual = float(np.max(np.abs(values_all[best, rows])))

        log.debug("%s iteration %d: residual=%.3e changes=%d", stage, it, residual, changes)
        if trace is not None:
            trace.record(
                TraceRow(
                    stage=stage,
                    iteration=it,
                    residual=residual,
                    policy_changes=changes,
                    alpha=alpha,
                    radius=radius,
                )
            )
        if changes == 0:
            if residual <= tol:
                converged = True
                break
            if method == "direct" or lin_tol < 1e-15:
                break
            lin_tol /= 10.0

    fallback_used = False
    if not converged and value_iteration_fallback:
        fallback_used = True
        log.info("%s: policy iteration stalled at residual %.3e; value iteration", stage, residual)
        rel, anchor, steps = _value_iteration(opr, rel, anchor, tol, value_iteration_steps)
        iterations += steps
        values, _ = apply_inf_anchored(opr, rel, anchor)
        residual = float(np.max(np.abs(values)))
        converged = residual <= tol

    _, policy = apply_inf_anchored(opr, rel, anchor)
    return DiscountedSolution(
        grid=opr.grid,
        w_relative=rel,
        w_origin=anchor,
        policy=policy,
        residual_inf_norm=residual,
        iterations=iterations,
        converged=converged,
        alpha=alpha,
        diagnostics={
            "linear_method": method,
            "monotone_violations": monotone_violations,
            "value_iteration_fallback": fallback_used,
        },
    )


def c_circ_of(p: ControlProblem, grid: Grid) -> float:
    """``-sup_t c_t`` over the grid nodes."""
    worst = max(float(np.max(p.zeroth_at(tau, grid.nodes))) for tau in p.controls)
    return -worst


def sup_cost(p: ControlProblem, grid: Grid) -> FloatArray:
    """``sup_t |g_t(x)|`` at every node."""
    return np.max(np.stack([np.abs(p.cost_at(tau, grid.nodes)) for tau in p.controls]), axis=0)


def effective_k0(p: ControlProblem, grid: Grid) -> float:
    """``k0 + sup_x (sup_t |g_t| - h)_+`` so that ``|g| <= k0_eff - k0 + h`` holds on the grid."""
    lyap = p.lyapunov
    if lyap is None:
        raise MissingLyapunovDataError("problem carries no Lyapunov data")
    h = eval_scalar(lyap.h, grid.nodes)
    excess = float(np.max(sup_cost(p, grid) - h))
    return lyap.k0 + max(0.0, excess)


@dataclass(frozen=True)
class BarrierViolation:
    node: int
    x: tuple[float, ...]
    value: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - abs(self.value)


@dataclass(frozen=True)
class BarrierReport:
    passed: bool
    violations: tuple[BarrierViolation, ...]
    worst_margin: float
    k0_effective: float
    c_circ: float
    m_bound: float
    sup_abs_w: float
    m_bound_passed: bool


def barrier_check(w: FloatArray, p: ControlProblem, grid: Grid) -> BarrierReport:
    """Check ``|w| <= k0_eff / c_circ + V`` at every node and the sup bound ``sup|g| / c_circ``."""
    lyap = p.lyapunov
    if lyap is None:
        raise MissingLyapunovDataError("barrier check needs Lyapunov data (V, h, k0)")
    c_circ = c_circ_of(p, grid)
    if not c_circ > 0.0:
        raise ProblemValidationError(
            f"barrier check needs a strictly negative zeroth-order term, got c_circ={c_circ}"
        )
    k0 = effective_k0(p, grid)
    V = eval_scalar(lyap.V, grid.nodes)
    bound = k0 / c_circ + V
    values = np.asarray(w, dtype=np.float64)
    margin = bound - np.abs(values)
    slack = 1e-12 * np.maximum(1.0, bound)
    bad = np.nonzero(margin < -slack)[0]
    violations = tuple(
        BarrierViolation(
            node=int(i),
            x=tuple(float(v) for v in grid.nodes[i]),
            value=float(values[i]),
            bound=float(bound[i]),
        )
        for i in bad
    )
    m_bound = float(np.max(sup_cost(p, grid))) / c_circ
    sup_w = float(np.max(np.abs(values)))
    return BarrierReport(
        passed=not violations,
        violations=violations,
        worst_margin=float(np.min(margin)),
        k0_effective=k0,
        c_circ=c_circ,
        m_bound=m_bound,
        sup_abs_w=sup_w,
        m_bound_passed=sup_w <= m_bound * (1.0 + 1e-9) + 1e-12,
    )


def check_barrier(sol: DiscountedSolution, p: ControlProblem, grid: Grid) -> BarrierReport:
    discounted = p if sol.alpha is None else p.with_discount(sol.alpha)
    return barrier_check(sol.w, discounted, grid)
