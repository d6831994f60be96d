from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from itertools import pairwise
from typing import Any

import numpy as np
from domain.errors import (
    ConstraintViolation,
    ErgodicHJBError,
    ExpressionError,
    InvalidGridError,
    MissingLyapunovDataError,
    MonotonicityError,
    ProblemValidationError,
    QuadratureError,
)
from domain.grid import Grid, build_grid
from domain.lyapunov import certify_problem, check_cost_domination
from domain.operator import (
    DiscreteOperator,
    JumpQuadrature,
    build_quadrature,
    grid_info,
    lattice_offsets,
    stencil_dump,
)
from domain.problem import AssumptionCheck, ControlProblem, ValidationReport, validate_problem
from domain.solvers import (
    DiscountedSolution,
    ErgodicSettings,
    ErgodicSolution,
    check_bar_w_bound,
    check_barrier,
    check_lambda_alpha_bound,
    ergodic_operator,
    expand_domain,
    uniqueness_probe,
    vanishing_discount,
    verify_ergodic_pair,
)
from domain.types import FloatArray
from ports.artifacts import ArtifactWriterPort
from ports.trace import ConvergenceTracePort
from pydantic import ValidationError
from shared.config.loader import ConfigError
from shared.contracts.v1.reports import (
    AlphaTraceEntry,
    AssumptionDoc,
    ErrorInfo,
    GridInfo,
    GrowthSample,
    InvariantOutcome,
    RadiusTraceEntry,
    RunReport,
    RunStatus,
    StudyDelta,
    StudyEntry,
    StudyReport,
)

from apps.solver.compose import ergodic_settings
from apps.solver.problems import build_problem
from apps.solver.settings import RunConfig

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2
EXIT_INVARIANT = 3

# assumption checks whose failure makes the scheme meaningless
HARD_CHECKS = frozenset(
    {"kernel-symmetry", "kernel-bounds", "zeroth-sign", "diffusion-ellipticity"}
)
_CONVERGENCE = frozenset({"converged", "domain-stabilized"})

_ERROR_CODES: tuple[tuple[type[BaseException], str], ...] = (
    (ConfigError, "config"),
    (ConstraintViolation, "constraint"),
    (ExpressionError, "expression"),
    (QuadratureError, "quadrature"),
    (MonotonicityError, "monotonicity"),
    (ProblemValidationError, "problem"),
    (InvalidGridError, "problem"),
    (MissingLyapunovDataError, "problem"),
    (ErgodicHJBError, "internal"),
)


@dataclass(frozen=True)
class RunOutcome:
    exit_code: int
    report: RunReport


def error_info(exc: BaseException) -> ErrorInfo | None:
    """Machine-readable error block for the failures the CLI reports instead of raising."""
    if isinstance(exc, ValidationError):
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or None
        cause = (first.get("ctx") or {}).get("error")
        if isinstance(cause, ConstraintViolation):
            return ErrorInfo(code="constraint", detail=str(cause), key=key)
        return ErrorInfo(code="config", detail=f"{key}: {first['msg']}", key=key)
    for kind, code in _ERROR_CODES:
        if isinstance(exc, kind):
            return ErrorInfo.model_validate({"code": code, "detail": str(exc)})
    return None


def failure_report(
    info: ErrorInfo, *, mode: Any = None, parameters: dict[str, Any] | None = None
) -> RunReport:
    internal = info.code == "internal"
    return RunReport(
        mode=mode,
        status="invariant-failed" if internal else "validation-failed",
        exit_code=EXIT_INVARIANT if internal else EXIT_INVALID,
        parameters=parameters or {},
        error=info,
    )


def _inv(
    name: str,
    passed: bool,
    *,
    hard: bool = True,
    value: float | None = None,
    bound: float | None = None,
    detail: str | None = None,
) -> InvariantOutcome:
    return InvariantOutcome(
        name=name,
        passed=bool(passed),
        hard=hard,
        value=None if value is None else float(value),
        bound=None if bound is None else float(bound),
        detail=detail,
    )


def _verdict(invariants: Sequence[InvariantOutcome]) -> tuple[RunStatus, int]:
    failed = [i for i in invariants if i.hard and not i.passed]
    if any(i.name in _CONVERGENCE for i in failed):
        return "not-converged", EXIT_NOT_CONVERGED
    if failed:
        return "invariant-failed", EXIT_INVARIANT
    return "ok", EXIT_OK


def _finish(base: RunReport, invariants: list[InvariantOutcome], **fields: Any) -> RunReport:
    status, code = _verdict(invariants)
    for i in invariants:
        if not i.passed:
            kind = "hard" if i.hard else "soft"
            log.warning("invariant %s failed (%s): %s", i.name, kind, i.detail or i.value)
    return base.model_copy(
        update={"status": status, "exit_code": code, "invariants": invariants, **fields}
    )


def _parameters(config: RunConfig) -> dict[str, Any]:
    # output location and worker count do not change results; keep them out of report.json
    data = config.model_dump(mode="json", include={"mode", "problem", "grid", "solver", "study"})
    data["exterior"] = config.exterior
    return data


def _assumption_doc(c: AssumptionCheck) -> AssumptionDoc:
    return AssumptionDoc(
        name=c.name,
        passed=c.passed,
        worst_value=c.worst_value,
        witness=None if c.witness is None else list(c.witness),
        detail=c.detail,
        proxy=c.proxy,
    )


def _quadrature_for(
    p: ControlProblem, grid: Grid, settings: ErgodicSettings
) -> JumpQuadrature | None:
    if p.kernel is None:
        return None
    return build_quadrature(
        grid,
        p.kernel.s,
        grid.radius + settings.r_far_margin,
        tail_extent=settings.tail_extent,
    )


def _validate(p: ControlProblem, settings: ErgodicSettings) -> ValidationReport:
    grid = build_grid(p.d, settings.hx, settings.radii[0])
    q = _quadrature_for(p, grid, settings)
    if q is not None:
        offsets, _ = q.all_offsets()
    else:
        offsets, _ = lattice_offsets(grid, max(1.0, grid.hx))
    return validate_problem(p, grid, offsets)


def _grid_doc(grid: Grid, r_far: float | None) -> GridInfo:
    return GridInfo(d=grid.d, hx=grid.hx, radius=grid.radius, nodes=grid.n, r_far=r_far)


def _write_field(writer: ArtifactWriterPort, grid: Grid, values: FloatArray, column: str) -> None:
    header = [f"x{k + 1}" for k in range(grid.d)] + [column]
    writer.write_csv("solution.csv", header, np.column_stack([grid.nodes, values]))


def _write_stencil(
    writer: ArtifactWriterPort,
    config: RunConfig,
    opr: DiscreteOperator,
    q: JumpQuadrature | None,
) -> None:
    nodes = config.output.stencil_nodes
    if nodes is None:
        return
    bad = [i for i in nodes if not 0 <= i < opr.n]
    if bad:
        raise ProblemValidationError(f"stencil nodes {bad} are outside 0..{opr.n - 1}")
    r_far = None if q is None else q.tail_radius
    writer.write_json("stencil.json", stencil_dump(opr, nodes, r_far=r_far))


def _radius_trace(sol: DiscountedSolution | ErgodicSolution) -> list[RadiusTraceEntry]:
    return [
        RadiusTraceEntry(
            radius=s.radius,
            nodes=s.nodes,
            change=s.change,
            iterations=s.iterations,
            converged=s.converged,
        )
        for s in sol.radius_trace
    ]


def _discount_for(p: ControlProblem, config: RunConfig) -> float | None:
    return config.solver.alpha if config.solver.alpha is not None else p.discount


# --- discounted ---------------------------------------------------------------


def _solve_discounted(
    p: ControlProblem,
    config: RunConfig,
    settings: ErgodicSettings,
    trace: ConvergenceTracePort | None,
) -> tuple[DiscountedSolution, DiscreteOperator, JumpQuadrature | None]:
    return expand_domain(
        p,
        _discount_for(p, config),
        settings.radii,
        settings.expansion_tol,
        settings=settings,
        exterior=config.exterior,
        trace=trace,
    )


def _barrier_invariants(
    problem: ControlProblem,
    sol: DiscountedSolution,
    q: JumpQuadrature | None,
    *,
    zero_exterior: bool,
) -> list[InvariantOutcome]:
    certified, cert = certify_problem(problem, sol.grid, q)
    if not cert.passed:
        detail = f"skipped: Lyapunov certificate has {len(cert.violations)} violations"
        return [_inv("barrier", False, hard=False, detail=detail)]
    report = check_barrier(sol, certified, sol.grid)
    return [
        _inv(
            "barrier",
            report.passed,
            hard=zero_exterior,
            value=report.worst_margin,
            bound=0.0,
            detail=(
                f"k0_eff={report.k0_effective:.6g} c_circ={report.c_circ:.6g} "
                f"violations={len(report.violations)}"
            ),
        ),
        _inv(
            "m-bound",
            report.m_bound_passed,
            hard=zero_exterior,
            value=report.sup_abs_w,
            bound=report.m_bound,
        ),
    ]


def _run_discounted(
    p: ControlProblem,
    config: RunConfig,
    settings: ErgodicSettings,
    writer: ArtifactWriterPort,
    trace: ConvergenceTracePort,
    base: RunReport,
) -> RunReport:
    sol, opr, q = _solve_discounted(p, config, settings, trace)
    problem = p.with_discount(sol.alpha) if sol.alpha is not None else p
    invariants = [
        _inv("converged", sol.converged, value=sol.residual_inf_norm, bound=settings.solver_tol),
        _inv(
            "domain-stabilized",
            bool(sol.diagnostics.get("domain_stabilized", False)),
            value=sol.radius_trace[-1].change if sol.radius_trace else None,
            bound=settings.expansion_tol,
        ),
        _inv(
            "monotone-iterates",
            sol.diagnostics.get("monotone_violations", 0) == 0,
            hard=False,
            value=float(sol.diagnostics.get("monotone_violations", 0)),
        ),
    ]
    if problem.lyapunov is not None:
        invariants.extend(
            _barrier_invariants(problem, sol, q, zero_exterior=config.exterior == "zero")
        )

    w = sol.w
    _write_field(writer, sol.grid, w, "w")
    _write_stencil(writer, config, opr, q)
    summary = {
        "alpha": sol.alpha,
        "w_origin": sol.w_origin,
        "lambda_alpha": sol.lambda_alpha,
        "residual": sol.residual_inf_norm,
        "iterations": sol.iterations,
        "radius": sol.grid.radius,
        "nodes": sol.grid.n,
        "sup_abs_w": float(np.max(np.abs(w))),
        "linear_method": str(sol.diagnostics.get("linear_method")),
        "exterior": config.exterior,
    }
    return _finish(
        base,
        invariants,
        grid=grid_info(opr, None if q is None else q.tail_radius),
        summary=summary,
        radius_trace=_radius_trace(sol),
    )


# --- ergodic ------------------------------------------------------------------


def _lyapunov_invariants(
    p: ControlProblem, sol: ErgodicSolution, settings: ErgodicSettings
) -> list[InvariantOutcome]:
    out: list[InvariantOutcome] = []
    certified, cert = certify_problem(p, sol.grid, sol.quadrature)
    if cert.passed:
        bounds = check_lambda_alpha_bound(sol, certified)
        worst = max(bounds, key=lambda b: b.value - b.bound)
        out.append(
            _inv(
                "lambda-alpha-bound",
                all(b.passed for b in bounds),
                value=worst.value,
                bound=worst.bound,
                detail=f"worst at alpha={worst.alpha:g}",
            )
        )
    else:
        detail = f"skipped: Lyapunov certificate has {len(cert.violations)} violations"
        out.append(_inv("lambda-alpha-bound", False, hard=False, detail=detail))
    if len(sol.snapshots) >= 2:
        bar_w = check_bar_w_bound(sol.snapshots, p, settings.window)
        out.append(
            _inv(
                "bar-w-bound",
                bar_w.passed,
                hard=False,
                value=max(lv.max_on_ball for lv in bar_w.levels),
                detail=f"bounded={bar_w.bounded}",
            )
        )
    if sol.growth_report is not None:
        out.append(
            _inv(
                "growth-proxy",
                sol.growth_report.nonincreasing_tail,
                hard=False,
                value=max((g.ratio for g in sol.growth_report.samples), default=0.0),
                detail="|u|/(1+V) along the axes, outer quarter non-increasing",
            )
        )
    return out


def _run_ergodic(
    p: ControlProblem,
    config: RunConfig,
    settings: ErgodicSettings,
    writer: ArtifactWriterPort,
    trace: ConvergenceTracePort,
    base: RunReport,
) -> RunReport:
    sol = vanishing_discount(p, settings, trace=trace)
    opr = ergodic_operator(p, sol)
    probe = None
    if config.solver.uniqueness_probe:
        probe = uniqueness_probe(p, settings, factor=config.solver.probe_factor)
    check = verify_ergodic_pair(
        sol.u,
        sol.lambda_star,
        opr,
        settings.tol,
        inner_radius=settings.window,
        alpha=sol.final_alpha,
        alternative=probe,
    )
    last = sol.alpha_trace[-1]
    invariants = [
        _inv("converged", sol.converged, value=last.lambda_change, bound=settings.tol),
        _inv(
            "ergodic-residual",
            check.passed,
            value=check.residual,
            bound=check.tol,
            detail=f"discount remainder {check.discount_remainder:.3e}",
        ),
        _inv("normalized", check.normalized, detail="u(origin) == 0"),
    ]
    if check.probe_passed is not None:
        gap = max(check.probe_lambda_diff or 0.0, check.probe_u_diff or 0.0)
        invariants.append(
            _inv(
                "uniqueness-probe",
                check.probe_passed,
                value=gap,
                bound=5.0 * settings.tol,
                detail=f"alphas scaled by {config.solver.probe_factor:g}",
            )
        )
    if p.lyapunov is not None:
        invariants.extend(_lyapunov_invariants(p, sol, settings))

    _write_field(writer, sol.grid, sol.u, "u")
    _write_stencil(writer, config, opr, sol.quadrature)
    summary = {
        "lambda_star": sol.lambda_star,
        "final_alpha": sol.final_alpha,
        "levels": len(sol.alpha_trace),
        "residual": check.residual,
        "discount_remainder": check.discount_remainder,
        "radius": sol.grid.radius,
        "nodes": sol.grid.n,
        "sup_abs_u": float(np.max(np.abs(sol.u))),
        "probe_lambda_diff": check.probe_lambda_diff,
        "probe_u_diff": check.probe_u_diff,
        "exterior": sol.exterior,
    }
    growth = []
    if sol.growth_report is not None:
        growth = [GrowthSample(radius=g.radius, ratio=g.ratio) for g in sol.growth_report.samples]
    r_far = None if sol.quadrature is None else sol.quadrature.tail_radius
    return _finish(
        base,
        invariants,
        grid=grid_info(opr, r_far),
        summary=summary,
        lambda_star=sol.lambda_star,
        alpha_trace=[
            AlphaTraceEntry(
                alpha=lv.alpha,
                lambda_alpha=lv.lambda_alpha,
                change=lv.change,
                lambda_change=lv.lambda_change,
                iterations=lv.iterations,
                converged=lv.converged,
                remainder=lv.remainder,
            )
            for lv in sol.alpha_trace
        ],
        radius_trace=_radius_trace(sol),
        growth_report=growth,
    )


# --- certify ------------------------------------------------------------------


def _run_certify(
    p: ControlProblem,
    config: RunConfig,
    settings: ErgodicSettings,
    writer: ArtifactWriterPort,
    trace: ConvergenceTracePort,
    base: RunReport,
) -> RunReport:
    grid = build_grid(p.d, settings.hx, settings.radii[-1])
    q = _quadrature_for(p, grid, settings)
    certified, cert = certify_problem(p, grid, q)
    lyap = p.lyapunov
    assert lyap is not None
    exponents = {
        "growth": lyap.growth_exponent,
        "envelope": cert.exponent,
        "mu": lyap.mu,
        "s": None if p.kernel is None else p.kernel.s,
    }
    r_far = None if q is None else q.tail_radius
    doc = cert.to_document(p.name, exponents=exponents, r_far=r_far)
    writer.write_json("certificate.json", doc)
    bound = cert.k0 - cert.k1 * grid.norms**cert.exponent
    writer.write_csv(
        "certificate.csv",
        [f"x{k + 1}" for k in range(grid.d)] + ["LV", "envelope"],
        np.column_stack([grid.nodes, cert.values, bound]),
    )

    domination = check_cost_domination(certified, grid)
    invariants = [
        _inv(
            "lyapunov-certificate",
            cert.passed,
            value=cert.worst_margin,
            bound=0.0,
            detail=f"fit={cert.fit} tail={cert.tail_mode} violations={len(cert.violations)}",
        ),
        _inv(
            "cost-domination",
            domination.passed,
            hard=False,
            value=domination.max_ratio,
            bound=domination.bound,
            detail=f"outer-bin maxima decreasing={domination.decreasing}",
        ),
    ]
    summary = {
        "k0": cert.k0,
        "k1": cert.k1,
        "exponent": cert.exponent,
        "fit": cert.fit,
        "tail_mode": cert.tail_mode,
        "violations": len(cert.violations),
        "worst_margin": cert.worst_margin,
    }
    return _finish(base, invariants, grid=_grid_doc(grid, r_far), summary=summary)


# --- convergence study --------------------------------------------------------


def _run_study(
    p: ControlProblem,
    config: RunConfig,
    settings: ErgodicSettings,
    writer: ArtifactWriterPort,
    trace: ConvergenceTracePort,
    base: RunReport,
) -> RunReport:
    levels: list[tuple[Grid, FloatArray, float | None]] = []
    runs: list[StudyEntry] = []
    invariants: list[InvariantOutcome] = []
    for k in range(config.study.levels):
        hx = config.grid.hx / 2**k
        level = ergodic_settings(config, hx=hx)
        if config.study.base == "ergodic":
            esol = vanishing_discount(p, level, trace=trace)
            grid, values, lam, ok = esol.grid, esol.u, esol.lambda_star, esol.converged
        else:
            dsol, _, _ = _solve_discounted(p, config, level, trace)
            grid, values, lam, ok = dsol.grid, dsol.w, dsol.lambda_alpha, dsol.converged
        log.info("study hx=%g nodes=%d lambda=%s converged=%s", hx, grid.n, lam, ok)
        runs.append(StudyEntry(hx=hx, nodes=grid.n, lambda_star=lam, converged=ok))
        invariants.append(_inv("converged", ok, detail=f"hx={hx:g}"))
        levels.append((grid, values, lam))

    window = settings.window
    deltas: list[StudyDelta] = []
    for (cg, cv, cl), (fg, fv, fl) in pairwise(levels):
        inner = np.nonzero(cg.inner_mask(window))[0]
        ids = fg.nearest_index(cg.nodes[inner])
        keep = ids >= 0
        sup = float(np.max(np.abs(fv[ids[keep]] - cv[inner[keep]]))) if np.any(keep) else 0.0
        deltas.append(
            StudyDelta(
                coarse_hx=cg.hx,
                fine_hx=fg.hx,
                sup_diff=sup,
                lambda_delta=None if cl is None or fl is None else abs(fl - cl),
            )
        )

    finest, values, lam = levels[-1]
    _write_field(writer, finest, values, "u" if config.study.base == "ergodic" else "w")
    summary = {
        "base": config.study.base,
        "levels": len(levels),
        "finest_hx": finest.hx,
        "max_sup_diff": max(d.sup_diff for d in deltas),
    }
    return _finish(
        base,
        invariants,
        grid=_grid_doc(finest, None),
        summary=summary,
        lambda_star=lam,
        study=StudyReport(window_radius=window, runs=runs, deltas=deltas),
    )


_Handler = Callable[
    [
        ControlProblem,
        RunConfig,
        ErgodicSettings,
        ArtifactWriterPort,
        ConvergenceTracePort,
        RunReport,
    ],
    RunReport,
]
_HANDLERS: dict[str, _Handler] = {
    "discounted": _run_discounted,
    "ergodic": _run_ergodic,
    "certify": _run_certify,
    "convergence-study": _run_study,
}


def _dispatch(
    config: RunConfig, writer: ArtifactWriterPort, trace: ConvergenceTracePort
) -> RunReport:
    p = build_problem(config.problem)
    settings = ergodic_settings(config)
    log.info("mode=%s problem=%s hx=%g radii=%s", config.mode, p.name, settings.hx, settings.radii)
    validation = _validate(p, settings)
    base = RunReport(
        mode=config.mode,
        status="ok",
        exit_code=EXIT_OK,
        problem=p.name,
        parameters=_parameters(config),
        validation=[_assumption_doc(c) for c in validation.checks],
    )
    hard = [c.name for c in validation.failed() if c.name in HARD_CHECKS]
    if hard:
        info = ErrorInfo(code="problem", detail=f"failed assumption checks: {', '.join(hard)}")
        return base.model_copy(
            update={"status": "validation-failed", "exit_code": EXIT_INVALID, "error": info}
        )
    return _HANDLERS[config.mode](p, config, settings, writer, trace, base)


def run(
    config: RunConfig, *, writer: ArtifactWriterPort, trace: ConvergenceTracePort
) -> RunOutcome:
    """Execute one configured run and write report.json plus the mode's artifacts."""
    try:
        report = _dispatch(config, writer, trace)
    except Exception as exc:
        info = error_info(exc)
        if info is None:
            raise
        log.error("%s error: %s", info.code, info.detail)
        report = failure_report(info, mode=config.mode, parameters=_parameters(config))
    finally:
        trace.close()
    writer.write_json("report.json", report)
    return RunOutcome(report.exit_code, report)
