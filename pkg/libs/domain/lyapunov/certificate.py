from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from domain.errors import MissingLyapunovDataError
from domain.grid import Grid
from domain.operator.quadrature import (
    JumpQuadrature,
    lattice_offsets,
    ray_directions,
    sphere_measure,
)
from domain.problem.families import RadialPower
from domain.problem.model import (
    COMPENSATOR_RADIUS,
    ControlProblem,
    LyapunovData,
    eval_kernel,
    eval_matrix,
    eval_scalar,
    eval_vector,
)
from domain.types import FloatArray, KernelFactor, ScalarField
from shared.contracts.v1.reports import (
    CertificateDoc,
    EnvelopeDoc,
    GridInfo,
    ViolationDoc,
)

log = logging.getLogger(__name__)

EPSILON = 1e-12
FAR_FIELD_FACTOR = 1024.0
_PANELS = 24
_GAUSS = 8
_CHUNK_ELEMENTS = 1_000_000

FitMode = Literal["slope", "max-compatible", "failed"]


def _eval_on(fn: ScalarField, pts: FloatArray) -> FloatArray:
    flat = pts.reshape(-1, pts.shape[-1])
    return eval_scalar(fn, flat).reshape(pts.shape[:-1])


def _kbar(factor: KernelFactor, x: FloatArray, y: FloatArray) -> FloatArray:
    return 0.5 * (eval_kernel(factor, x, y) + eval_kernel(factor, x, -y))


def _log_radial_rule(r_lo: float, r_hi: float) -> tuple[FloatArray, FloatArray]:
    """Nodes and weights for ``integral_{r_lo}^{r_hi} f(r) dr / r`` in ``t = log r``."""
    t, w = np.polynomial.legendre.leggauss(_GAUSS)
    edges = np.linspace(np.log(r_lo), np.log(r_hi), _PANELS + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return np.exp(nodes), weights


def _jump_part(
    p: ControlProblem, grid: Grid, q: JumpQuadrature, lyap: LyapunovData, tau: str
) -> tuple[FloatArray, str]:
    assert p.kernel is not None
    factor = p.kernel.factor(tau)
    x = grid.nodes
    v0 = eval_scalar(lyap.V, x)
    out = np.zeros(grid.n)

    ys, ws = q.all_offsets(include_tail=False)
    step = max(1, _CHUNK_ELEMENTS // max(1, grid.n))
    for lo in range(0, ys.shape[0], step):
        y = ys[lo : lo + step]
        delta = (
            _eval_on(lyap.V, x[:, None, :] + y[None, :, :])
            + _eval_on(lyap.V, x[:, None, :] - y[None, :, :])
            - 2.0 * v0[:, None]
        )
        out += (delta * _kbar(factor, x[:, None, :], y[None, :, :]) * ws[lo : lo + step]).sum(
            axis=1
        )

    # |y| > tail_radius: V evaluated exactly along rays in log-radius
    s = q.s
    r_lo = q.tail_radius
    r_hi = FAR_FIELD_FACTOR * r_lo
    radii, rw = _log_radial_rule(r_lo, r_hi)
    dirs, dw = ray_directions(grid.d)
    y = (dirs[:, None, :] * radii[None, :, None]).reshape(-1, grid.d)
    wy = (dw[:, None] * (rw * radii ** (-2.0 * s))[None, :]).ravel()
    for lo in range(0, y.shape[0], step):
        yy = y[lo : lo + step]
        delta = (
            _eval_on(lyap.V, x[:, None, :] + yy[None, :, :])
            + _eval_on(lyap.V, x[:, None, :] - yy[None, :, :])
            - 2.0 * v0[:, None]
        )
        out += (delta * _kbar(factor, x[:, None, :], yy[None, :, :]) * wy[lo : lo + step]).sum(
            axis=1
        )

    gamma = lyap.growth_exponent
    if gamma is None or not gamma < 2.0 * s:
        return out, "truncated"
    # V(x +- y) ~ |y|^gamma beyond r_hi
    far = dirs[0] * r_hi
    k_far = _kbar(factor, x, np.broadcast_to(far, x.shape))
    growth = 2.0 * r_hi ** (gamma - 2.0 * s) / (2.0 * s - gamma)
    remainder = sphere_measure(grid.d) * (growth - v0 * r_hi ** (-2.0 * s) / s)
    return out + k_far * remainder, "closed-form"


@dataclass(frozen=True, eq=False)
class LyapunovTerms:
    """Per-control pieces of ``L_t V + c_t V`` at the grid nodes."""

    jump: FloatArray
    drift: FloatArray
    local: FloatArray
    levy: FloatArray
    zeroth: FloatArray
    tail_mode: str

    def total(self, *, include_zeroth: bool = False) -> FloatArray:
        base = self.jump + self.drift + self.local + self.levy
        return base + self.zeroth if include_zeroth else base


def lyapunov_terms(
    p: ControlProblem, grid: Grid, q: JumpQuadrature | None, tau: str
) -> LyapunovTerms:
    lyap = p.lyapunov
    if lyap is None:
        raise MissingLyapunovDataError("problem carries no Lyapunov data")
    x = grid.nodes
    zero = np.zeros(grid.n)
    jump, tail_mode = zero, "none"
    if p.kernel is not None:
        if q is None:
            raise MissingLyapunovDataError("jump kernel present but no quadrature given")
        jump, tail_mode = _jump_part(p, grid, q, lyap, tau)

    grad = eval_vector(lyap.grad, x)
    drift = np.sum(p.drift_at(tau, x) * grad, axis=-1)

    local = zero
    levy = zero
    if p.mixed is not None:
        a = eval_matrix(p.mixed.diffusion[tau], x)
        hess = eval_matrix(lyap.hessian, x)
        local = np.einsum("nij,nji->n", a, hess)
        if p.mixed.levy is not None:
            y, _ = lattice_offsets(grid, grid.radius + 1.0)
            omega = eval_kernel(p.mixed.levy[tau], x[:, None, :], y[None, :, :]) * grid.hx**grid.d
            v0 = eval_scalar(lyap.V, x)
            vy = _eval_on(lyap.V, x[:, None, :] + y[None, :, :])
            small = (np.linalg.norm(y, axis=1) < COMPENSATOR_RADIUS).astype(np.float64)
            comp = (grad[:, None, :] * y[None, :, :]).sum(axis=-1) * small[None, :]
            levy = ((vy - v0[:, None] - comp) * omega).sum(axis=1)

    zeroth = p.zeroth_at(tau, x) * eval_scalar(lyap.V, x)
    return LyapunovTerms(jump, drift, local, levy, zeroth, tail_mode)


def _sup_terms(
    p: ControlProblem, grid: Grid, q: JumpQuadrature | None, *, include_zeroth: bool
) -> tuple[FloatArray, str]:
    terms = [lyapunov_terms(p, grid, q, tau) for tau in p.controls]
    values = np.max(np.stack([t.total(include_zeroth=include_zeroth) for t in terms]), axis=0)
    modes = {t.tail_mode for t in terms}
    mode = "truncated" if "truncated" in modes else terms[0].tail_mode
    return values, mode


def evaluate_LV(
    p: ControlProblem, grid: Grid, q: JumpQuadrature | None, *, include_zeroth: bool = False
) -> FloatArray:
    """``sup_t (L_t V [+ c_t V])`` at every node, with V evaluated exactly off the grid."""
    values, _ = _sup_terms(p, grid, q, include_zeroth=include_zeroth)
    return values


@dataclass(frozen=True)
class CertificateViolation:
    node: int
    x: tuple[float, ...]
    value: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.value


@dataclass(frozen=True, eq=False)
class LyapunovCertificate:
    """Envelope ``sup_t L_t V <= k0 - k1 |x|^e`` checked at the grid nodes only."""

    values: FloatArray
    k0: float
    k1: float
    exponent: float
    violations: tuple[CertificateViolation, ...]
    worst_margin: float
    fit: FitMode
    grid: Grid
    tail_mode: str = "closed-form"

    @property
    def passed(self) -> bool:
        return not self.violations

    def envelope(self) -> RadialPower:
        return RadialPower(self.k1, self.exponent)

    def to_document(
        self, problem: str, *, exponents: dict[str, float | None], r_far: float | None = None
    ) -> CertificateDoc:
        g = self.grid
        return CertificateDoc(
            problem=problem,
            grid=GridInfo(d=g.d, hx=g.hx, radius=g.radius, nodes=g.n, r_far=r_far),
            exponents=exponents,
            envelope=EnvelopeDoc(k0=self.k0, k1=self.k1, exponent=self.exponent),
            worst_margin=self.worst_margin,
            violations=[
                ViolationDoc(
                    node=v.node, x=list(v.x), value=v.value, bound=v.bound, margin=v.margin
                )
                for v in self.violations
            ],
            tail_mode=self.tail_mode,
            fit=self.fit,
        )


def fit_envelope(
    values: FloatArray, lyap: LyapunovData, grid: Grid, *, tail_mode: str = "closed-form"
) -> LyapunovCertificate:
    """Smallest admissible (k1, k0) with ``values <= k0 - k1 r^e`` at every node.

    k1 is half the decay slope of ``values`` against ``r^e`` on the outer half of the nodes.
    Without a decaying trend it falls back to the largest k1 that works with ``k0 = eps``;
    if that is not positive either, k0 is fixed on the inner half and the outer nodes that
    break the envelope are listed.
    """
    e = lyap.envelope_exponent if lyap.envelope_exponent is not None else lyap.growth_exponent
    if e is None:
        raise MissingLyapunovDataError("envelope exponent is unknown; set envelope_exponent")
    v = np.asarray(values, dtype=np.float64)
    r = grid.norms
    re = r**e
    rmax = float(r.max())

    outer = (r >= 0.5 * rmax) & (r > 0.0)
    fit: FitMode = "failed"
    k1 = EPSILON
    slope = 0.0
    if np.count_nonzero(outer) >= 2 and np.ptp(re[outer]) > 0.0:
        xo = re[outer] - re[outer].mean()
        slope = -float((xo * (v[outer] - v[outer].mean())).sum() / (xo * xo).sum())
    if slope > 0.0:
        k1, fit = 0.5 * slope, "slope"
    else:
        pos = r > 0.0
        candidate = float(np.min((EPSILON - v[pos]) / re[pos])) if np.any(pos) else 0.0
        at_origin_ok = bool(np.all(v[~pos] <= EPSILON))
        if candidate > 0.0 and at_origin_ok:
            k1, fit = candidate, "max-compatible"

    if fit == "failed":
        inner = r <= 0.5 * rmax
        k0 = max(EPSILON, float(np.max(v[inner] + k1 * re[inner])))
    else:
        k0 = max(EPSILON, float(np.max(v + k1 * re)))
    bound = k0 - k1 * re
    margin = bound - v
    slack = 1e-12 * np.maximum(1.0, np.abs(bound))
    bad = np.nonzero(margin < -slack)[0]
    violations = tuple(
        CertificateViolation(
            node=int(i),
            x=tuple(float(c) for c in grid.nodes[i]),
            value=float(v[i]),
            bound=float(bound[i]),
        )
        for i in bad
    )
    log.debug("envelope fit=%s k0=%.4g k1=%.4g violations=%d", fit, k0, k1, len(violations))
    return LyapunovCertificate(
        values=v,
        k0=k0,
        k1=k1,
        exponent=float(e),
        violations=violations,
        worst_margin=float(np.min(margin)),
        fit=fit,
        grid=grid,
        tail_mode=tail_mode,
    )


def certify(p: ControlProblem, grid: Grid, q: JumpQuadrature | None) -> LyapunovCertificate:
    lyap = p.lyapunov
    if lyap is None:
        raise MissingLyapunovDataError("problem carries no Lyapunov data")
    values, mode = _sup_terms(p, grid, q, include_zeroth=False)
    return fit_envelope(values, lyap, grid, tail_mode=mode)


def certify_problem(
    p: ControlProblem, grid: Grid, q: JumpQuadrature | None
) -> tuple[ControlProblem, LyapunovCertificate]:
    """Replace the provisional (k0, h) of ``p`` with a fitted certificate when one exists."""
    cert = certify(p, grid, q)
    if not cert.passed:
        return p, cert
    assert p.lyapunov is not None
    lyap = replace(
        p.lyapunov,
        k0=cert.k0,
        h=cert.envelope(),
        k1=cert.k1,
        envelope_exponent=cert.exponent,
        certified=True,
    )
    return p.with_lyapunov(lyap), cert


@dataclass(frozen=True)
class CostDominationReport:
    """``sup_t |g_t| / h`` on the outer half of the nodes; a proxy for ``g = o(h)``."""

    max_ratio: float
    bin_maxima: tuple[float, ...]
    decreasing: bool
    bound: float
    passed: bool
    proxy: bool = True


def check_cost_domination(
    p: ControlProblem, grid: Grid, *, bound: float = 1.0, bins: int = 4
) -> CostDominationReport:
    lyap = p.lyapunov
    if lyap is None:
        raise MissingLyapunovDataError("cost domination needs h")
    r = grid.norms
    outer = np.nonzero(r >= 0.5 * r.max())[0]
    outer = outer[np.argsort(r[outer], kind="stable")]
    g = np.max(np.stack([np.abs(p.cost_at(tau, grid.nodes[outer])) for tau in p.controls]), axis=0)
    h = eval_scalar(lyap.h, grid.nodes[outer])
    ratio = np.where(h > 0.0, g / np.where(h > 0.0, h, 1.0), np.inf)
    chunks = [c for c in np.array_split(ratio, min(bins, ratio.size)) if c.size]
    maxima = tuple(float(c.max()) for c in chunks)
    decreasing = all(b <= a * (1.0 + 1e-12) for a, b in zip(maxima, maxima[1:], strict=False))
    worst = float(ratio.max())
    return CostDominationReport(
        max_ratio=worst,
        bin_maxima=maxima,
        decreasing=decreasing,
        bound=bound,
        passed=decreasing and worst <= bound,
    )
