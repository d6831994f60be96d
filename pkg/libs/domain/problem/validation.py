from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from domain.errors import ProblemValidationError
from domain.grid import Grid
from domain.types import FloatArray

from .model import ControlProblem, eval_kernel, eval_matrix, eval_scalar

log = logging.getLogger(__name__)

DEFAULT_GROWTH_BOUND = 1e3
_REL = 1e-12
_MAX_NODES = 512
_MAX_OFFSETS = 256


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    worst_value: float | None = None
    witness: tuple[float, ...] | None = None
    detail: str = ""
    proxy: bool = False


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[AssumptionCheck, ...]
    c_circ: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> tuple[AssumptionCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def get(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.checks)


def _subsample(count: int, cap: int) -> np.ndarray:
    if count <= cap:
        return np.arange(count)
    return np.unique(np.linspace(0, count - 1, cap).round().astype(np.int64))


def _require_finite(values: FloatArray, what: str, points: FloatArray) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argwhere(bad)[0][0])
        raise ProblemValidationError(f"{what} is not finite at x={tuple(points[i])}")


def _ray_directions(d: int) -> FloatArray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    angles = np.arange(8) * (np.pi / 4.0)
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _sphere_measure(d: int) -> float:
    return 2.0 if d == 1 else 2.0 * np.pi


def validate_problem(
    p: ControlProblem,
    grid: Grid,
    offsets: FloatArray,
    *,
    growth_bound: float = DEFAULT_GROWTH_BOUND,
) -> ValidationReport:
    """Check the structural assumptions that can be sampled on ``grid`` and ``offsets``.

    Malformed fields raise :class:`ProblemValidationError`; everything else is reported.
    """
    offs = np.asarray(offsets, dtype=np.float64).reshape(-1, grid.d)
    offs = offs[np.any(offs != 0.0, axis=1)]
    if offs.shape[0] == 0:
        raise ValueError("offset set is empty")
    if p.d != grid.d:
        raise ProblemValidationError(f"problem dimension {p.d} does not match grid {grid.d}")

    xs = grid.nodes[_subsample(grid.n, _MAX_NODES)]
    ys = offs[_subsample(offs.shape[0], _MAX_OFFSETS)]
    checks: list[AssumptionCheck] = []

    drifts, costs, zeroths = [], [], []
    for tau in p.controls:
        b = p.drift_at(tau, xs)
        g = p.cost_at(tau, xs)
        c = p.zeroth_at(tau, xs)
        _require_finite(b.sum(axis=-1), f"drift of control {tau!r}", xs)
        _require_finite(g, f"cost of control {tau!r}", xs)
        _require_finite(c, f"zeroth-order term of control {tau!r}", xs)
        drifts.append(np.linalg.norm(b, axis=-1))
        costs.append(np.abs(g))
        zeroths.append(c)

    if p.kernel is not None:
        checks.extend(_kernel_checks(p, xs, ys))

    c_circ: float | None = None
    if p.discounted:
        cmax = np.max(np.stack(zeroths), axis=0)
        i = int(np.argmax(cmax))
        c_circ = float(-cmax[i])
        checks.append(
            AssumptionCheck(
                "zeroth-sign",
                passed=c_circ > 0.0,
                worst_value=float(cmax[i]),
                witness=tuple(map(float, xs[i])),
                detail=f"c_circ={c_circ:.6g}",
            )
        )

    if p.lyapunov is not None:
        checks.extend(_lyapunov_checks(p, grid, xs, ys, drifts, costs, zeroths, growth_bound))

    if p.mixed is not None:
        checks.extend(_mixed_checks(p, grid, xs, offs))

    report = ValidationReport(tuple(checks), c_circ)
    for c in report.failed():
        log.info("assumption check %s failed: %s", c.name, c.detail or c.worst_value)
    return report


def _kernel_checks(p: ControlProblem, xs: FloatArray, ys: FloatArray) -> list[AssumptionCheck]:
    assert p.kernel is not None
    lo, hi = p.kernel.lower, p.kernel.upper
    worst_asym, asym_witness = 0.0, None
    worst_bound, bound_witness = 0.0, None
    for tau in p.controls:
        factor = p.kernel.factor(tau)
        kp = eval_kernel(factor, xs[:, None, :], ys[None, :, :])
        km = eval_kernel(factor, xs[:, None, :], -ys[None, :, :])
        for k in (kp, km):
            if not np.all(np.isfinite(k)):
                raise ProblemValidationError(f"kernel of control {tau!r} is not finite")
            if np.any(k < 0.0):
                i, j = np.argwhere(k < 0.0)[0]
                raise ProblemValidationError(
                    f"kernel of control {tau!r} is negative at x={tuple(xs[i])}, y={tuple(ys[j])}"
                )
        asym = np.abs(kp - km)
        i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
        if asym[i, j] > worst_asym:
            worst_asym = float(asym[i, j])
            asym_witness = (*map(float, xs[i]), *map(float, ys[j]))
        excess = np.maximum(lo - kp, kp - hi)
        i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
        if bound_witness is None or excess[i, j] > worst_bound:
            worst_bound = float(excess[i, j])
            bound_witness = (*map(float, xs[i]), *map(float, ys[j]))
    return [
        AssumptionCheck(
            "kernel-symmetry",
            passed=worst_asym <= _REL * max(1.0, hi),
            worst_value=worst_asym,
            witness=asym_witness,
            detail="max |k(x,y) - k(x,-y)| over sampled pairs (witness: x..., y...)",
        ),
        AssumptionCheck(
            "kernel-bounds",
            passed=worst_bound <= _REL * max(1.0, hi),
            worst_value=worst_bound,
            witness=bound_witness,
            detail=f"(2-2s)lambda={lo:.6g} <= k <= (2-2s)Lambda={hi:.6g}",
        ),
    ]


def _integrability_check(p: ControlProblem) -> AssumptionCheck:
    """Shell-by-shell radial estimate of the integral of V^{1+mu} against 1/(1+|y|^{d+2s})."""
    assert p.lyapunov is not None and p.kernel is not None
    lyap, s, d = p.lyapunov, p.kernel.s, p.d
    e1 = np.zeros(d)
    e1[0] = 1.0

    def radial(r: float) -> float:
        v = float(eval_scalar(lyap.V, (r * e1)[None, :])[0])
        return v ** (1.0 + lyap.mu) * _sphere_measure(d) * r ** (d - 1) / (1.0 + r ** (d + 2 * s))

    edges = [0.0, *[2.0**k for k in range(41)]]
    shells = [
        integrate.quad(radial, a, b, limit=200)[0] for a, b in zip(edges, edges[1:], strict=False)
    ]
    last, prev = shells[-1], shells[-2]
    ratio = last / prev if prev > 0.0 else 0.0
    total = float(np.sum(shells))
    return AssumptionCheck(
        "lyapunov-integrability",
        passed=bool(np.isfinite(total)) and ratio < 1.0,
        worst_value=ratio,
        detail=f"shell decay ratio {ratio:.4g}, partial integral {total:.6g}",
        proxy=True,
    )


def _lyapunov_checks(
    p: ControlProblem,
    grid: Grid,
    xs: FloatArray,
    ys: FloatArray,
    drifts: list[FloatArray],
    costs: list[FloatArray],
    zeroths: list[FloatArray],
    growth_bound: float,
) -> list[AssumptionCheck]:
    lyap = p.lyapunov
    assert lyap is not None
    out: list[AssumptionCheck] = []
    V = eval_scalar(lyap.V, xs)
    h = eval_scalar(lyap.h, xs)
    _require_finite(V, "Lyapunov function V", xs)
    _require_finite(h, "Lyapunov envelope h", xs)
    low = min(float(V.min()), float(h.min()))
    out.append(AssumptionCheck("lyapunov-nonnegative", passed=low >= -_REL, worst_value=low))

    radii = np.linspace(lyap.ray_radius, max(grid.radius, lyap.ray_radius + grid.hx), 64)
    worst_drop, drop_witness = 0.0, None
    for e in _ray_directions(p.d):
        pts = radii[:, None] * e[None, :]
        for field in (lyap.V, lyap.h):
            vals = eval_scalar(field, pts)
            drops = -np.diff(vals)
            k = int(np.argmax(drops))
            if drops[k] > worst_drop:
                worst_drop, drop_witness = float(drops[k]), tuple(map(float, pts[k + 1]))
    out.append(
        AssumptionCheck(
            "lyapunov-rays",
            passed=worst_drop <= _REL * max(1.0, float(np.max(np.abs(V)))),
            worst_value=worst_drop,
            witness=drop_witness,
            detail=f"V, h nondecreasing along rays beyond radius {lyap.ray_radius}",
            proxy=True,
        )
    )

    if p.kernel is None:
        return out
    s, mu = p.kernel.s, lyap.mu
    out.append(_integrability_check(p))

    ratio = (
        np.max(np.stack(drifts), axis=0) / (1.0 + V) ** ((2 * s - 1) * mu)
        + np.max(np.stack(costs), axis=0) / (1.0 + V) ** (1 + 2 * s * mu)
    )
    if p.discounted:
        ratio = ratio + np.max(np.abs(np.stack(zeroths)), axis=0) / (1.0 + V) ** (2 * s * mu)
    i = int(np.argmax(ratio))
    out.append(
        AssumptionCheck(
            "coefficient-growth",
            passed=bool(np.isfinite(ratio[i])) and float(ratio[i]) <= growth_bound,
            worst_value=float(ratio[i]),
            witness=tuple(map(float, xs[i])),
            detail="|b|/(1+V)^((2s-1)mu) + |g|/(1+V)^(1+2s mu) [+ |c|/(1+V)^(2s mu)]",
        )
    )

    Vy = eval_scalar(lyap.V, ys)
    Vxy = eval_scalar(lyap.V, xs[:, None, :] + ys[None, :, :])
    doubling = Vxy / ((1.0 + V)[:, None] * (1.0 + Vy)[None, :])
    unit = _ray_directions(p.d)
    local = np.concatenate([unit * 0.5, unit])
    Vloc = eval_scalar(lyap.V, xs[:, None, :] + local[None, :, :])
    neighbour = Vloc.max(axis=1) / (1.0 + V)
    worst = float(doubling.max() + neighbour.max())
    out.append(
        AssumptionCheck(
            "lyapunov-polynomial-growth",
            passed=bool(np.isfinite(worst)) and worst <= growth_bound,
            worst_value=worst,
            detail="V(x+y)/((1+V(x))(1+V(y))) + sup_{|y-x|<=1} V(y)/(1+V(x))",
        )
    )
    return out


def _mixed_checks(
    p: ControlProblem, grid: Grid, xs: FloatArray, offs: FloatArray
) -> list[AssumptionCheck]:
    mixed = p.mixed
    assert mixed is not None
    out: list[AssumptionCheck] = []
    lo, hi = np.inf, -np.inf
    for tau in p.controls:
        a = eval_matrix(mixed.diffusion[tau], xs)
        _require_finite(a.reshape(a.shape[0], -1).sum(axis=1), f"diffusion of {tau!r}", xs)
        if np.max(np.abs(a - np.swapaxes(a, -1, -2))) > _REL * max(1.0, float(np.abs(a).max())):
            raise ProblemValidationError(f"diffusion matrix of control {tau!r} is not symmetric")
        eig = np.linalg.eigvalsh(a)
        lo, hi = min(lo, float(eig.min())), max(hi, float(eig.max()))
    tol = _REL * max(1.0, mixed.Lambda_ell)
    out.append(
        AssumptionCheck(
            "diffusion-ellipticity",
            passed=lo >= mixed.lambda_ell - tol and hi <= mixed.Lambda_ell + tol,
            worst_value=lo,
            detail=f"eigenvalues span [{lo:.6g}, {hi:.6g}]",
        )
    )
    if mixed.levy is None:
        return out
    if mixed.levy_majorant is None:
        raise ProblemValidationError("Levy densities need a majorant K(y)")
    K = np.asarray(mixed.levy_majorant(offs), dtype=np.float64)
    _require_finite(K, "Levy majorant", offs)
    excess = 0.0
    for tau in p.controls:
        dens = eval_kernel(mixed.levy[tau], xs[:, None, :], offs[None, :, :])
        if not np.all(np.isfinite(dens)) or np.any(dens < 0.0):
            raise ProblemValidationError(f"Levy density of {tau!r} is negative or not finite")
        excess = max(excess, float(np.max(dens - K[None, :] * (1.0 + _REL))))
    out.append(
        AssumptionCheck(
            "levy-majorant",
            passed=excess <= 0.0,
            worst_value=excess,
            detail="K_tau(x,y) <= K(y) on sampled pairs",
        )
    )
    r = np.linalg.norm(offs, axis=1)
    moment = np.minimum(r**2, 1.0) * K * grid.hx**grid.d
    total = float(moment.sum())
    outer = float(moment[r > 0.5 * r.max()].sum())
    frac = outer / total if total > 0.0 else 0.0
    out.append(
        AssumptionCheck(
            "levy-moment",
            passed=bool(np.isfinite(total)) and frac <= 0.1,
            worst_value=total,
            detail=f"integral of min(|y|^2,1)K ~ {total:.6g}; outer-half share {frac:.3g}",
            proxy=True,
        )
    )
    return out
