from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from domain.errors import MissingLyapunovDataError, ProblemValidationError
from domain.grid import ExteriorRule, Grid, build_grid, extend
from domain.operator.assembly import DiscreteOperator, apply_inf, assemble
from domain.operator.quadrature import JumpQuadrature, build_quadrature
from domain.problem.model import ControlProblem, eval_scalar
from domain.solvers.discounted import (
    DiscountedSolution,
    RadiusStep,
    effective_k0,
    solve_policy_iteration,
)
from domain.solvers.linear import LinearMethod
from domain.types import FloatArray, IntArray
from ports.trace import ConvergenceTracePort

log = logging.getLogger(__name__)

ExteriorPolicy = Literal["zero", "reflect", "cost-over-alpha"]


@dataclass(frozen=True)
class ErgodicSettings:
    """Numerical knobs shared by the domain-expansion and vanishing-discount loops."""

    hx: float
    radii: tuple[float, ...]
    alphas: tuple[float, ...] = (0.5, 0.25, 0.125, 0.0625, 0.03125)
    tol: float = 1e-6
    domain_tol: float | None = None
    solver_tol: float = 1e-10
    max_iter: int = 60
    r_far_margin: float = 1.0
    tail_extent: float = 1.0
    exterior: ExteriorPolicy = "reflect"
    inner_radius: float | None = None
    linear: LinearMethod = "auto"
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.radii:
            raise ProblemValidationError("radius schedule is empty")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:], strict=False)):
            raise ProblemValidationError(f"radius schedule {self.radii} is not strictly increasing")
        if self.alphas and any(
            b >= a for a, b in zip(self.alphas, self.alphas[1:], strict=False)
        ):
            raise ProblemValidationError(f"alpha schedule {self.alphas} is not strictly decreasing")
        if any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ProblemValidationError(f"alpha schedule {self.alphas} must lie in (0, 1)")

    @property
    def window(self) -> float:
        return self.inner_radius if self.inner_radius is not None else self.radii[0] / 4.0

    @property
    def expansion_tol(self) -> float:
        return self.domain_tol if self.domain_tol is not None else self.tol


@dataclass(frozen=True)
class AlphaLevel:
    alpha: float
    lambda_alpha: float
    change: float | None
    lambda_change: float | None
    iterations: int
    converged: bool
    radius: float
    remainder: float = 0.0


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Normalized discounted solution kept per alpha level."""

    alpha: float
    grid: Grid
    w_bar: FloatArray
    w_origin: float


@dataclass(frozen=True)
class GrowthPoint:
    radius: float
    ratio: float


@dataclass(frozen=True)
class GrowthReport:
    """``|u| / (1 + V)`` sampled along the coordinate rays; a proxy for ``u = o(V)``."""

    samples: tuple[GrowthPoint, ...]
    nonincreasing_tail: bool
    proxy: bool = True


@dataclass(frozen=True, eq=False)
class ErgodicSolution:
    grid: Grid
    u: FloatArray
    lambda_star: float
    policy: IntArray
    alpha_trace: tuple[AlphaLevel, ...]
    radius_trace: tuple[RadiusStep, ...]
    growth_report: GrowthReport | None
    converged: bool
    snapshots: tuple[Snapshot, ...] = ()
    exterior: ExteriorPolicy = "reflect"
    final_alpha: float = 0.0
    final_w_origin: float = 0.0
    quadrature: JumpQuadrature | None = field(default=None, repr=False)


def exterior_rule(
    p: ControlProblem, policy: ExteriorPolicy, alpha: float | None
) -> ExteriorRule:
    if policy == "zero":
        return ExteriorRule.zero()
    if policy == "reflect":
        return ExteriorRule.nearest()
    if policy == "cost-over-alpha":
        if alpha is None:
            raise ProblemValidationError("cost-over-alpha exterior needs a discount")
        scale = 1.0 / alpha

        def cheapest_over_alpha(x: FloatArray) -> FloatArray:
            costs = np.stack([p.cost_at(tau, x) for tau in p.controls])
            return scale * np.min(costs, axis=0)

        return ExteriorRule.function(cheapest_over_alpha, label=f"cost-over-alpha({alpha!r})")
    raise ProblemValidationError(f"unknown exterior policy {policy!r}")


def build_level(
    p: ControlProblem,
    radius: float,
    settings: ErgodicSettings,
    ext: ExteriorRule,
) -> tuple[Grid, JumpQuadrature | None, DiscreteOperator]:
    grid = build_grid(p.d, settings.hx, radius)
    q = None
    if p.kernel is not None:
        q = build_quadrature(
            grid,
            p.kernel.s,
            radius + settings.r_far_margin,
            tail_extent=settings.tail_extent,
        )
    opr = assemble(p, grid, q, ext, workers=settings.workers)
    return grid, q, opr


def _transfer(src: Grid, values: FloatArray, dst: Grid) -> FloatArray:
    """Carry a grid function to another grid of the same spacing (nearest continuation)."""
    return extend(src, values, ExteriorRule.nearest(), dst.nodes)


def inner_change(
    grid_a: Grid,
    rel_a: FloatArray,
    anchor_a: float,
    grid_b: Grid,
    rel_b: FloatArray,
    anchor_b: float,
    window: float,
) -> float:
    """``sup |w_b - w_a|`` over nodes of ``grid_b`` within ``window`` that ``grid_a`` also has."""
    inner = np.nonzero(grid_b.inner_mask(window))[0]
    ids = grid_a.locate(grid_b.index[inner])
    keep = ids >= 0
    if not np.any(keep):
        return float("inf")
    diff = rel_b[inner[keep]] - rel_a[ids[keep]] + (anchor_b - anchor_a)
    return float(np.max(np.abs(diff)))


def expand_domain(
    p: ControlProblem,
    alpha: float | None,
    schedule: Sequence[float],
    tol: float,
    *,
    settings: ErgodicSettings,
    exterior: ExteriorPolicy | None = None,
    warm: tuple[Grid, FloatArray, float] | None = None,
    trace: ConvergenceTracePort | None = None,
) -> tuple[DiscountedSolution, DiscreteOperator, JumpQuadrature | None]:
    """Solve the discounted problem on growing balls until the inner window settles.

    Returns the last solution (tagged with its radius trace), its operator and quadrature.
    ``diagnostics["domain_stabilized"]`` is False when the schedule ran out first.
    """
    radii = tuple(float(r) for r in schedule)
    if not radii:
        raise ProblemValidationError("radius schedule is empty")
    if any(b <= a for a, b in zip(radii, radii[1:], strict=False)):
        raise ProblemValidationError(f"radius schedule {radii} is not strictly increasing")
    policy = exterior if exterior is not None else settings.exterior
    problem = p.with_discount(alpha) if alpha is not None else p
    if not problem.discounted:
        raise ProblemValidationError("expand_domain needs a discount or a zeroth-order term")
    window = settings.inner_radius if settings.inner_radius is not None else radii[0] / 4.0
    ext = exterior_rule(problem, policy, alpha)

    steps: list[RadiusStep] = []
    prev: tuple[Grid, FloatArray, float] | None = None
    sol: DiscountedSolution | None = None
    opr: DiscreteOperator | None = None
    q: JumpQuadrature | None = None
    stabilized = len(radii) == 1
    for radius in radii:
        grid, q, opr = build_level(problem, radius, settings, ext)
        start = prev if prev is not None else warm
        w0 = None
        if start is not None:
            w0 = _transfer(start[0], start[1], grid) + start[2]
        sol = solve_policy_iteration(
            opr,
            settings.solver_tol,
            settings.max_iter,
            w0=w0,
            trace=trace,
            linear=settings.linear,
            alpha=alpha,
            radius=radius,
            stage="discounted",
        )
        change = None
        if prev is not None:
            change = inner_change(
                prev[0], prev[1], prev[2], grid, sol.w_relative, sol.w_origin, window
            )
        steps.append(RadiusStep(radius, grid.n, change, sol.iterations, sol.converged))
        log.info(
            "alpha=%s R=%g nodes=%d residual=%.3e change=%s",
            alpha,
            radius,
            grid.n,
            sol.residual_inf_norm,
            "-" if change is None else f"{change:.3e}",
        )
        prev = (grid, sol.w_relative, sol.w_origin)
        if change is not None and change <= tol:
            stabilized = True
            break

    assert sol is not None and opr is not None
    tagged = sol.with_radius_trace(tuple(steps), domain_stabilized=stabilized)
    return tagged, opr, q


def vanishing_discount(
    p: ControlProblem,
    settings: ErgodicSettings,
    *,
    alphas: Sequence[float] | None = None,
    trace: ConvergenceTracePort | None = None,
) -> ErgodicSolution:
    """Send the discount to zero, tracking ``lambda_a = a w_a(origin)`` and ``w_a - w_a(origin)``.

    Stops at the first level where both the value and the normalized potential moved by at
    most ``settings.tol`` on the inner window and the discount remainder
    ``alpha * max_inner |w_bar|`` plus the solver residual is within ``settings.tol``, so the
    accepted pair solves the undiscounted equation to ``tol``. Otherwise the traces come back
    flagged.
    """
    schedule = tuple(float(a) for a in (alphas if alphas is not None else settings.alphas))
    if not schedule:
        raise ProblemValidationError("alpha schedule is empty")
    if any(b >= a for a, b in zip(schedule, schedule[1:], strict=False)):
        raise ProblemValidationError(f"alpha schedule {schedule} is not strictly decreasing")
    if any(not 0.0 < a < 1.0 for a in schedule):
        raise ProblemValidationError(f"alpha schedule {schedule} must lie in (0, 1)")

    window = settings.window
    levels: list[AlphaLevel] = []
    snapshots: list[Snapshot] = []
    warm: tuple[Grid, FloatArray, float] | None = None
    prev_level: Snapshot | None = None
    prev_lambda: float | None = None
    sol: DiscountedSolution | None = None
    q: JumpQuadrature | None = None
    converged = False
    for k, alpha in enumerate(schedule):
        sol, _, q = expand_domain(
            p,
            alpha,
            settings.radii,
            settings.expansion_tol,
            settings=settings,
            warm=warm,
            trace=trace,
        )
        grid = sol.grid
        w_bar = sol.w_relative
        lam = alpha * sol.w_origin
        remainder = alpha * float(np.max(np.abs(w_bar[grid.inner_mask(window)])))
        change = None
        lambda_change = None
        if prev_level is not None and prev_lambda is not None:
            change = inner_change(prev_level.grid, prev_level.w_bar, 0.0, grid, w_bar, 0.0, window)
            lambda_change = abs(lam - prev_lambda)
        levels.append(
            AlphaLevel(
                alpha=alpha,
                lambda_alpha=lam,
                change=change,
                lambda_change=lambda_change,
                iterations=sol.iterations,
                converged=sol.converged,
                radius=grid.radius,
                remainder=remainder,
            )
        )
        snap = Snapshot(alpha=alpha, grid=grid, w_bar=w_bar, w_origin=sol.w_origin)
        snapshots.append(snap)
        log.info(
            "alpha=%g lambda=%.10g dlambda=%s dw=%s remainder=%.3e",
            alpha,
            lam,
            "-" if lambda_change is None else f"{lambda_change:.3e}",
            "-" if change is None else f"{change:.3e}",
            remainder,
        )
        prev_level, prev_lambda = snap, lam
        settled = remainder + settings.solver_tol <= settings.tol
        if change is not None and lambda_change is not None and settled:
            if change <= settings.tol and lambda_change <= settings.tol:
                converged = True
                break
        if k + 1 < len(schedule):
            # w_bar + lambda / alpha_next
            warm = (grid, w_bar, lam / schedule[k + 1])

    assert sol is not None
    u = normalize(sol.w_relative, sol.grid.origin_index)
    lam_star = levels[-1].lambda_alpha
    growth = growth_report(u, sol.grid, p) if p.lyapunov is not None else None
    return ErgodicSolution(
        grid=sol.grid,
        u=u,
        lambda_star=lam_star,
        policy=sol.policy,
        alpha_trace=tuple(levels),
        radius_trace=sol.radius_trace,
        growth_report=growth,
        converged=converged and all(level.converged for level in levels),
        snapshots=tuple(snapshots),
        exterior=settings.exterior,
        final_alpha=levels[-1].alpha,
        final_w_origin=sol.w_origin,
        quadrature=q,
    )


def normalize(w: FloatArray, origin: int) -> FloatArray:
    out = np.asarray(w, dtype=np.float64) - float(w[origin])
    out[origin] = 0.0
    return out


def ergodic_operator(p: ControlProblem, solution: ErgodicSolution) -> DiscreteOperator:
    """Undiscounted operator acting on the normalized potential of ``solution``.

    Exterior values are those the last discounted level saw, shifted by ``-w(origin)``.
    """
    problem = p.with_discount(None)
    grid = solution.grid
    shift = solution.final_w_origin
    if solution.exterior == "reflect":
        ext = ExteriorRule.nearest()
    elif solution.exterior == "zero":
        ext = ExteriorRule.constant(-shift)
    else:
        base = exterior_rule(p, "cost-over-alpha", solution.final_alpha)

        def shifted(x: FloatArray) -> FloatArray:
            return base.values(x) - shift

        ext = ExteriorRule.function(shifted, label="cost-over-alpha-normalized")
    return assemble(problem, grid, solution.quadrature, ext)


@dataclass(frozen=True)
class ErgodicCheck:
    residual: float
    discount_remainder: float
    tol: float
    passed: bool
    normalized: bool
    probe_lambda_diff: float | None = None
    probe_u_diff: float | None = None
    probe_passed: bool | None = None


def verify_ergodic_pair(
    u: FloatArray,
    lam: float,
    opr: DiscreteOperator,
    tol: float,
    *,
    inner_radius: float | None = None,
    alpha: float = 0.0,
    alternative: ErgodicSolution | None = None,
) -> ErgodicCheck:
    """Residual of ``inf_t(L_t u + g_t) - lam`` on the inner window, plus an optional probe.

    The check passes when the residual is at most ``tol``. ``discount_remainder`` reports
    ``alpha * max_inner |u|``, the part of the residual the last discounted level leaves behind
    on a truncated grid. ``alternative`` is the result of a second run on a different discount
    schedule; both its value and potential must agree within ``5 * tol``.
    """
    grid = opr.grid
    window = inner_radius if inner_radius is not None else grid.radius / 4.0
    inner = grid.inner_mask(window)
    values, _ = apply_inf(opr, u)
    residual = float(np.max(np.abs(values[inner] - lam)))
    remainder = alpha * float(np.max(np.abs(np.asarray(u)[inner])))
    check = ErgodicCheck(
        residual=residual,
        discount_remainder=remainder,
        tol=tol,
        passed=residual <= tol,
        normalized=float(u[grid.origin_index]) == 0.0,
    )
    if alternative is None:
        return check
    lam_diff = abs(alternative.lambda_star - lam)
    u_diff = inner_change(alternative.grid, alternative.u, 0.0, grid, np.asarray(u), 0.0, window)
    return replace(
        check,
        probe_lambda_diff=lam_diff,
        probe_u_diff=u_diff,
        probe_passed=lam_diff <= 5.0 * tol and u_diff <= 5.0 * tol,
    )


def uniqueness_probe(
    p: ControlProblem,
    settings: ErgodicSettings,
    *,
    factor: float = 0.8,
    trace: ConvergenceTracePort | None = None,
) -> ErgodicSolution:
    """Re-run the driver on the discount schedule scaled by ``factor``."""
    alphas = tuple(a * factor for a in settings.alphas)
    return vanishing_discount(p, settings, alphas=alphas, trace=trace)


def growth_report(u: FloatArray, grid: Grid, p: ControlProblem) -> GrowthReport:
    lyap = p.lyapunov
    if lyap is None:
        raise MissingLyapunovDataError("growth report needs V")
    V = eval_scalar(lyap.V, grid.nodes)
    ratio = np.abs(u) / (1.0 + V)
    on_axis = np.sum(grid.index != 0, axis=1) <= 1
    radii = np.round(grid.norms[on_axis], 12)
    per_radius: dict[float, float] = {}
    for r, v in zip(radii, ratio[on_axis], strict=True):
        if r > 0.0:
            per_radius[float(r)] = max(per_radius.get(float(r), 0.0), float(v))
    samples = tuple(GrowthPoint(r, per_radius[r]) for r in sorted(per_radius))
    tail = samples[-max(2, len(samples) // 4) :]
    slack = 1e-9
    nonincreasing = all(
        b.ratio <= a.ratio + slack for a, b in zip(tail, tail[1:], strict=False)
    )
    return GrowthReport(samples=samples, nonincreasing_tail=nonincreasing)


@dataclass(frozen=True)
class BarWLevel:
    alpha: float
    max_on_ball: float
    violations: int
    worst_margin: float


@dataclass(frozen=True)
class BarWReport:
    levels: tuple[BarWLevel, ...]
    bounded: bool
    passed: bool
    ball_radius: float


def check_bar_w_bound(
    snapshots: Sequence[Snapshot], p: ControlProblem, ball_radius: float
) -> BarWReport:
    """Check ``|w_bar(x)| <= max_B |w_bar| + V(x)`` per level and boundedness of ``max_B``."""
    if len(snapshots) < 2:
        raise ValueError("at least two alpha levels are needed")
    lyap = p.lyapunov
    if lyap is None:
        raise MissingLyapunovDataError("bar-w bound needs V")
    levels: list[BarWLevel] = []
    for snap in snapshots:
        V = eval_scalar(lyap.V, snap.grid.nodes)
        ball = snap.grid.inner_mask(ball_radius)
        m = float(np.max(np.abs(snap.w_bar[ball])))
        margin = m + V - np.abs(snap.w_bar)
        slack = 1e-12 * np.maximum(1.0, m + V)
        levels.append(
            BarWLevel(
                alpha=snap.alpha,
                max_on_ball=m,
                violations=int(np.sum(margin < -slack)),
                worst_margin=float(np.min(margin)),
            )
        )
    maxima = np.array([lv.max_on_ball for lv in levels])
    bounded = bool(maxima[-1] <= 2.0 * float(np.median(maxima)) + 1e-12)
    passed = bounded and all(lv.violations == 0 for lv in levels)
    return BarWReport(levels=tuple(levels), bounded=bounded, passed=passed, ball_radius=ball_radius)


@dataclass(frozen=True)
class LambdaBound:
    alpha: float
    value: float
    bound: float
    passed: bool


def check_lambda_alpha_bound(
    solution: ErgodicSolution, p: ControlProblem
) -> tuple[LambdaBound, ...]:
    """``alpha |w_alpha(origin)| <= k0_eff + alpha V(origin)`` for every recorded level."""
    lyap = p.lyapunov
    if lyap is None:
        raise MissingLyapunovDataError("lambda bound needs Lyapunov data")
    out: list[LambdaBound] = []
    for snap in solution.snapshots:
        k0 = effective_k0(p, snap.grid)
        o = snap.grid.origin_index
        v0 = float(eval_scalar(lyap.V, snap.grid.nodes[o : o + 1])[0])
        value = abs(snap.alpha * snap.w_origin)
        bound = k0 + snap.alpha * v0
        out.append(LambdaBound(snap.alpha, value, bound, value <= bound * (1.0 + 1e-12)))
    return tuple(out)
