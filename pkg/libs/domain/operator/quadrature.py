from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from domain.errors import QuadratureError
from domain.grid import Grid
from domain.problem.model import ConstantFactor, eval_kernel
from domain.types import FloatArray, IntArray, KernelFactor

_GAUSS_POINTS = 12
_CHUNK_ELEMENTS = 2_000_000
_HALF_CIRCLE_POINTS = 32
_MEAN_PANELS = 256
FAR_CUTOFF = 1024.0
FAR_PANEL = 1.0


def fractional_laplacian_constant(d: int, s: float) -> float:
    """Half the normalising constant of (-Delta)^s in dimension ``d``.

    With this value as kernel factor, ``integral delta(u, x, y) |y|^(-d-2s) dy`` equals
    ``-(-Delta)^s u(x)``; the halving accounts for the symmetric second difference.
    """
    full = 4.0**s * gamma_fn(0.5 * d + s) / (math.pi ** (0.5 * d) * abs(gamma_fn(-s)))
    return 0.5 * float(full)


def sphere_measure(d: int) -> float:
    if d == 1:
        return 2.0
    if d == 2:
        return 2.0 * math.pi
    raise QuadratureError(f"dimension d={d} is not supported")


def tail_mass_closed_form(d: int, s: float, radius: float) -> float:
    """``integral_{|y| > radius} |y|^(-d-2s) dy``."""
    return sphere_measure(d) * radius ** (-2.0 * s) / (2.0 * s)


@dataclass(frozen=True, eq=False)
class JumpQuadrature:
    """Weights for ``integral delta(u, x, y) k(x, y) |y|^(-d-2s) dy`` on a lattice.

    ``offsets``/``weights`` cover ``h <= |y| <= tail_radius`` with lattice hats,
    ``core_coeff`` is the moment-matched correction for ``|y| < h`` applied along the axes,
    and ``tail_offsets``/``tail_weights`` carry everything beyond ``tail_radius``.
    """

    d: int
    hx: float
    s: float
    tail_radius: float
    tail_extent: float
    offsets: FloatArray
    offset_index: IntArray
    weights: FloatArray
    core_coeff: float
    tail_offsets: FloatArray
    tail_weights: FloatArray

    @property
    def m(self) -> int:
        return int(self.weights.shape[0])

    @property
    def tail_mass(self) -> float:
        return float(self.tail_weights.sum())

    @property
    def far_radius(self) -> float:
        """Outer radius of the lattice hats; mass beyond it sits in centroid lumps."""
        return self.tail_extent * self.tail_radius

    def core_offsets(self) -> tuple[FloatArray, FloatArray]:
        """Axis pseudo-offsets ``+-h e_i``, each carrying half of ``core_coeff``."""
        eye = np.eye(self.d) * self.hx
        ys = np.concatenate([eye, -eye])
        ws = np.full(2 * self.d, 0.5 * self.core_coeff)
        return ys, ws

    def all_offsets(self, *, include_tail: bool = True) -> tuple[FloatArray, FloatArray]:
        core_y, core_w = self.core_offsets()
        parts_y = [self.offsets, core_y]
        parts_w = [self.weights, core_w]
        if include_tail:
            parts_y.append(self.tail_offsets)
            parts_w.append(self.tail_weights)
        return np.concatenate(parts_y), np.concatenate(parts_w)

    def second_moment(self) -> float:
        """Discrete ``sum W y_1^2`` over the hats plus the core, which equals the exact moment."""
        core_y, core_w = self.core_offsets()
        return float(
            (self.weights * self.offsets[:, 0] ** 2).sum() + (core_w * core_y[:, 0] ** 2).sum()
        )

    def integrate(
        self,
        fn: Callable[[FloatArray], FloatArray],
        x: FloatArray,
        factor: KernelFactor | None = None,
        *,
        include_tail: bool = True,
        far_panel: float = FAR_PANEL,
    ) -> FloatArray:
        """Apply the quadrature to a function known everywhere.

        ``x`` has shape (n, d) or (d,); the result has shape (n,). ``factor`` defaults to 1.
        Beyond ``tail_radius`` the lattice hats and lumps are not used: ``fn`` is integrated
        along rays on radial panels of width ``far_panel`` out to ``FAR_CUTOFF * tail_radius``,
        and past that ``fn(x +- y)`` is replaced by its mean over the last stretch of each ray.
        """
        pts = np.asarray(x, dtype=np.float64).reshape(-1, self.d)
        fac: KernelFactor = factor if factor is not None else ConstantFactor(1.0)
        u0 = np.asarray(fn(pts), dtype=np.float64).reshape(-1)
        ys, ws = self.all_offsets(include_tail=False)
        total = _second_difference_sum(fn, pts, u0, fac, ys, ws)
        if include_tail:
            total += self._far_field(fn, pts, u0, fac, far_panel)
        return total

    def _far_field(
        self,
        fn: Callable[[FloatArray], FloatArray],
        pts: FloatArray,
        u0: FloatArray,
        fac: KernelFactor,
        far_panel: float,
    ) -> FloatArray:
        if not far_panel > 0.0:
            raise QuadratureError(f"far_panel={far_panel} must be positive")
        r_lo = self.tail_radius
        panels = int(math.ceil((FAR_CUTOFF - 1.0) * r_lo / far_panel))
        r_cut = r_lo + panels * far_panel
        t, gw = _gauss_unit()
        radii = (r_lo + far_panel * (np.arange(panels)[:, None] + t[None, :])).ravel()
        rw = np.tile(far_panel * gw, panels) * radii ** (-1.0 - 2.0 * self.s)
        dirs, dw = ray_directions(self.d)
        ys = (dirs[:, None, :] * radii[None, :, None]).reshape(-1, self.d)
        ws = (dw[:, None] * rw[None, :]).ravel()
        total = _second_difference_sum(fn, pts, u0, fac, ys, ws)

        # past r_cut: mean of fn(x +- y) over the last panels of each ray
        window = min(panels, _MEAN_PANELS)
        wr = (r_cut - far_panel * (np.arange(window)[:, None] + t[None, :])).ravel()
        wg = np.tile(gw, window) / window
        mass = r_cut ** (-2.0 * self.s) / (2.0 * self.s)
        for theta, weight in zip(dirs, dw, strict=True):
            y = wr[:, None] * theta[None, :]
            up = _eval_flat(fn, pts[:, None, :] + y[None, :, :])
            um = _eval_flat(fn, pts[:, None, :] - y[None, :, :])
            mean = ((up + um) * wg[None, :]).sum(axis=1)
            far = np.broadcast_to(r_cut * theta, pts.shape)
            kbar = 0.5 * (eval_kernel(fac, pts, far) + eval_kernel(fac, pts, -far))
            total += weight * mass * kbar * (mean - 2.0 * u0)
        return total


def ray_directions(d: int) -> tuple[FloatArray, FloatArray]:
    """Unit directions over a half sphere with weights summing to the full sphere measure.

    Pair each direction with its mirror through the second difference.
    """
    if d == 1:
        return np.array([[1.0]]), np.array([2.0])
    if d != 2:
        raise QuadratureError(f"dimension d={d} is not supported")
    theta = np.arange(_HALF_CIRCLE_POINTS) * (math.pi / _HALF_CIRCLE_POINTS)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return dirs, np.full(_HALF_CIRCLE_POINTS, 2.0 * math.pi / _HALF_CIRCLE_POINTS)


def _eval_flat(fn: Callable[[FloatArray], FloatArray], z: FloatArray) -> FloatArray:
    flat = z.reshape(-1, z.shape[-1])
    return np.asarray(fn(flat), dtype=np.float64).reshape(z.shape[:-1])


def _second_difference_sum(
    fn: Callable[[FloatArray], FloatArray],
    pts: FloatArray,
    u0: FloatArray,
    fac: KernelFactor,
    ys: FloatArray,
    ws: FloatArray,
) -> FloatArray:
    """``sum_j w_j kbar(x, y_j) (fn(x + y_j) + fn(x - y_j) - 2 fn(x))`` in chunks."""
    total = np.zeros(pts.shape[0])
    step = max(1, _CHUNK_ELEMENTS // max(1, pts.shape[0]))
    for lo in range(0, ys.shape[0], step):
        y = ys[lo : lo + step]
        w = ws[lo : lo + step]
        up = _eval_flat(fn, pts[:, None, :] + y[None, :, :])
        um = _eval_flat(fn, pts[:, None, :] - y[None, :, :])
        kbar = 0.5 * (
            eval_kernel(fac, pts[:, None, :], y[None, :, :])
            + eval_kernel(fac, pts[:, None, :], -y[None, :, :])
        )
        total += ((up + um - 2.0 * u0[:, None]) * kbar * w[None, :]).sum(axis=1)
    return total


def _gauss_unit() -> tuple[FloatArray, FloatArray]:
    t, w = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
    return 0.5 * (t + 1.0), 0.5 * w


def _hat_masses_1d(h: float, j_lo: int, j_hi: int, s: float) -> FloatArray:
    """Masses of the hats centred at ``j h`` (j_lo..j_hi) restricted to ``[j_lo h, j_hi h]``."""
    t, gw = _gauss_unit()
    j = np.arange(j_lo, j_hi + 1, dtype=np.float64)
    scale = h ** (-2.0 * s)
    p = -1.0 - 2.0 * s
    left = scale * ((t[None, :] * (j[:, None] - 1.0 + t[None, :]) ** p) * gw[None, :]).sum(axis=1)
    right = scale * (((1.0 - t[None, :]) * (j[:, None] + t[None, :]) ** p) * gw[None, :]).sum(
        axis=1
    )
    left[0] = 0.0
    right[-1] = 0.0
    return left + right


def _hat_masses_2d(
    h: float, lower: float, upper: float, s: float, subcells: int, *, closed_lower: bool
) -> tuple[IntArray, FloatArray]:
    """Bilinear hat masses restricted to the annulus between ``lower`` and ``upper``."""
    reach = int(math.ceil(upper / h)) + 2
    axis = np.arange(-reach, reach + 1)
    mesh = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    r_idx = np.linalg.norm(mesh, axis=1) * h
    slack = math.sqrt(2.0) * h
    keep = (r_idx >= lower - slack) & (r_idx <= upper + slack) & np.any(mesh != 0, axis=1)
    cand = mesh[keep]

    mid = (np.arange(subcells) + 0.5) / subcells * 2.0 - 1.0
    A, B = np.meshgrid(mid, mid, indexing="ij")
    sub = np.stack([A.ravel(), B.ravel()], axis=-1)
    phi = (1.0 - np.abs(sub[:, 0])) * (1.0 - np.abs(sub[:, 1]))
    area = (2.0 * h / subcells) ** 2

    weights = np.empty(cand.shape[0])
    step = max(1, _CHUNK_ELEMENTS // sub.shape[0])
    for lo in range(0, cand.shape[0], step):
        z = (cand[lo : lo + step, None, :] + sub[None, :, :]) * h
        r = np.linalg.norm(z, axis=-1)
        inner = r >= lower if closed_lower else r > lower
        mask = inner & (r <= upper)
        with np.errstate(divide="ignore"):
            dens = np.where(mask, r ** (-2.0 - 2.0 * s), 0.0)
        weights[lo : lo + step] = (phi[None, :] * dens).sum(axis=1) * area
    nz = weights > 0.0
    return cand[nz].astype(np.int64), weights[nz]


def _lumps(d: int, s: float, radius: float) -> tuple[FloatArray, FloatArray]:
    """Point masses at the radial centroid of ``|y| > radius``; ordered so entry -1-j mirrors j."""
    rc = 2.0 * s / (2.0 * s - 1.0) * radius
    mass = tail_mass_closed_form(d, s, radius)
    if d == 1:
        return np.array([[-rc], [rc]]), np.full(2, 0.5 * mass)
    angles = np.arange(4) * (math.pi / 4.0)
    half = np.stack([np.cos(angles), np.sin(angles)], axis=-1) * rc
    dirs = np.concatenate([half, -half[::-1]])
    return dirs, np.full(8, mass / 8.0)


def build_quadrature(
    grid: Grid,
    s: float,
    R_far: float,
    *,
    tail_extent: float = 1.0,
    subcells: int = 16,
) -> JumpQuadrature:
    """Jump quadrature on ``grid``'s lattice with the far field starting at ``R_far``.

    ``R_far`` is snapped up to a lattice multiple. With ``tail_extent > 1`` the hats continue
    out to ``tail_extent * R_far`` before the remaining mass is lumped.
    """
    if not 0.5 < s < 1.0:
        raise QuadratureError(f"s={s} must lie in (1/2, 1)")
    if R_far < grid.radius + 1.0 - 1e-12:
        raise QuadratureError(
            f"R_far={R_far} must be at least R + 1 = {grid.radius + 1.0} "
            "so exterior data reachable from the interior is not clipped"
        )
    if tail_extent < 1.0:
        raise QuadratureError(f"tail_extent={tail_extent} must be >= 1")
    if subcells < 2:
        raise QuadratureError("subcells must be at least 2")

    h = grid.hx
    d = grid.d
    N = int(math.ceil(R_far / h - 1e-9))
    N_far = max(N, int(math.ceil(tail_extent * N - 1e-9)))
    R_t = N * h
    R_hat = N_far * h

    if d == 1:
        main_w = _hat_masses_1d(h, 1, N, s)
        j = np.arange(1, N + 1)
        offset_index = np.concatenate([-j[::-1], j])[:, None].astype(np.int64)
        weights = np.concatenate([main_w[::-1], main_w])
        if N_far > N:
            far_w = _hat_masses_1d(h, N, N_far, s)
            jf = np.arange(N, N_far + 1)
            far_index = np.concatenate([-jf[::-1], jf])[:, None].astype(np.int64)
            far_weights = np.concatenate([far_w[::-1], far_w])
        else:
            far_index = np.zeros((0, 1), dtype=np.int64)
            far_weights = np.zeros(0)
    elif d == 2:
        offset_index, weights = _hat_masses_2d(h, h, R_t, s, subcells, closed_lower=True)
        if N_far > N:
            far_index, far_weights = _hat_masses_2d(h, R_t, R_hat, s, subcells, closed_lower=False)
        else:
            far_index = np.zeros((0, 2), dtype=np.int64)
            far_weights = np.zeros(0)
    else:
        raise QuadratureError(f"dimension d={d} is not supported")

    offsets = offset_index.astype(np.float64) * h
    target = sphere_measure(d) * R_t ** (2.0 - 2.0 * s) / (d * (2.0 - 2.0 * s))
    have = float((weights * offsets[:, 0] ** 2).sum())
    core = (target - have) / (h * h)
    if not core > 0.0:
        raise QuadratureError(
            f"core correction {core:.3e} is not positive for hx={h}; increase subcells or refine"
        )

    lump_y, lump_w = _lumps(d, s, R_hat)
    tail_offsets = np.concatenate([far_index.astype(np.float64) * h, lump_y])
    tail_weights = np.concatenate([far_weights, lump_w])

    for arr in (offsets, weights, tail_offsets, tail_weights):
        arr.setflags(write=False)
    return JumpQuadrature(
        d=d,
        hx=h,
        s=s,
        tail_radius=R_t,
        tail_extent=R_hat / R_t,
        offsets=offsets,
        offset_index=offset_index,
        weights=weights,
        core_coeff=float(core),
        tail_offsets=tail_offsets,
        tail_weights=tail_weights,
    )


def lattice_offsets(grid: Grid, radius: float) -> tuple[FloatArray, IntArray]:
    """Nonzero lattice offsets with ``|y| <= radius`` in lexicographic order."""
    reach = int(math.floor(radius / grid.hx + 1e-9))
    axis = np.arange(-reach, reach + 1)
    mesh = np.stack(np.meshgrid(*([axis] * grid.d), indexing="ij"), axis=-1).reshape(-1, grid.d)
    norm2 = (mesh**2).sum(axis=1) * grid.hx**2
    keep = (norm2 <= radius * radius * (1.0 + 1e-12)) & np.any(mesh != 0, axis=1)
    idx = mesh[keep].astype(np.int64)
    return idx.astype(np.float64) * grid.hx, idx
