"""Builtin parameter families.

Every builder returns a fully populated :class:`ControlProblem`; numbers that a family
cannot know in advance (the Lyapunov constants k0, k1) are provisional until
``lyapunov.certify_problem`` replaces them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from domain.errors import ConstraintViolation
from domain.types import FloatArray, KernelFactor, ScalarField, VectorField

from .model import (
    ConstantFactor,
    ControlProblem,
    KernelSpec,
    LyapunovData,
    MixedSpec,
)

_EPS = 1e-12


@dataclass(frozen=True)
class PowerCap:
    """C² radial function equal to |x|^gamma for |x| >= 1.

    Inside the unit ball it is the even quartic a + b r² + c r⁴ that matches value, first
    and second radial derivative at r = 1.
    """

    gamma: float

    @property
    def coefficients(self) -> tuple[float, float, float]:
        g = self.gamma
        return (g - 2.0) * (g - 4.0) / 8.0, g * (4.0 - g) / 4.0, g * (g - 2.0) / 8.0

    def __call__(self, x: FloatArray) -> FloatArray:
        a, b, c = self.coefficients
        r = np.linalg.norm(x, axis=-1)
        far = np.maximum(r, 1.0) ** self.gamma
        near = a + b * r**2 + c * r**4
        return np.where(r >= 1.0, far, near)

    def grad(self, x: FloatArray) -> FloatArray:
        _, b, c = self.coefficients
        r = np.linalg.norm(x, axis=-1)
        far = self.gamma * np.maximum(r, 1.0) ** (self.gamma - 2.0)
        near = 2.0 * b + 4.0 * c * r**2
        return np.where(r >= 1.0, far, near)[..., None] * x

    def hessian(self, x: FloatArray) -> FloatArray:
        _, b, c = self.coefficients
        g = self.gamma
        r = np.linalg.norm(x, axis=-1)
        rs = np.maximum(r, 1.0)
        iso = np.where(r >= 1.0, g * rs ** (g - 2.0), 2.0 * b + 4.0 * c * r**2)
        rank_one = np.where(r >= 1.0, g * (g - 2.0) * rs ** (g - 4.0), 8.0 * c)
        eye = np.eye(x.shape[-1])
        outer = x[..., :, None] * x[..., None, :]
        return rank_one[..., None, None] * outer + iso[..., None, None] * eye


class RadialPower:
    """h(x) = scale·|x|^exponent."""

    __slots__ = ("scale", "exponent")

    def __init__(self, scale: float, exponent: float) -> None:
        self.scale = float(scale)
        self.exponent = float(exponent)

    def __call__(self, x: FloatArray) -> FloatArray:
        return self.scale * np.linalg.norm(x, axis=-1) ** self.exponent


def power_lyapunov(
    gamma: float,
    *,
    h: ScalarField,
    k0: float = 1.0,
    mu: float = 0.0,
    envelope_exponent: float | None = None,
    theta: float | None = None,
    sigma: float | None = None,
    k1: float | None = None,
) -> LyapunovData:
    cap = PowerCap(gamma)
    return LyapunovData(
        V=cap,
        grad=cap.grad,
        hessian=cap.hessian,
        h=h,
        k0=k0,
        mu=mu,
        gamma=gamma,
        theta=theta,
        sigma=sigma,
        envelope_exponent=envelope_exponent,
        growth_exponent=gamma,
        k1=k1,
    )


def check_example_constraints(gamma: float, theta: float, s: float) -> None:
    """Raise :class:`ConstraintViolation` naming the first broken inequality."""
    chain = [
        (0.5 < s < 1.0, "1/2 < s < 1", f"s={s}"),
        (gamma > s + 0.5, "gamma > s + 1/2", f"gamma={gamma}, s+1/2={s + 0.5}"),
        (gamma < 2.0 * s, "gamma < 2s", f"gamma={gamma}, 2s={2.0 * s}"),
        (theta >= 0.0, "theta >= 0", f"theta={theta}"),
        (theta + gamma - 1.0 > 0.0, "theta + gamma - 1 > 0", f"{theta + gamma - 1.0}"),
        (
            theta < (2.0 * s - gamma) * (2.0 * s - 1.0),
            "theta < (2s - gamma)(2s - 1)",
            f"theta={theta}, bound={(2.0 * s - gamma) * (2.0 * s - 1.0)}",
        ),
    ]
    for holds, inequality, detail in chain:
        if not holds:
            raise ConstraintViolation(inequality, detail)


class _InwardDrift:
    __slots__ = ("theta", "scale")

    def __init__(self, theta: float, scale: float) -> None:
        self.theta = theta
        self.scale = scale

    def __call__(self, x: FloatArray) -> FloatArray:
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0.0, r, 1.0)
        factor = np.where(r > 0.0, safe ** (self.theta - 1.0), 0.0)
        return -self.scale * factor[..., None] * x


class _SmoothPowerCost:
    __slots__ = ("exponent", "weight", "offset")

    def __init__(self, exponent: float, weight: float, offset: float) -> None:
        self.exponent = exponent
        self.weight = weight
        self.offset = offset

    def __call__(self, x: FloatArray) -> FloatArray:
        r2 = np.sum(x * x, axis=-1)
        return self.weight * (1.0 + r2) ** (0.5 * self.exponent) + self.offset


def modulated_factor(s: float, modulation: float) -> KernelFactor:
    """k(x, y) = (2-2s)(1 + m cos(x_1) cos|y|); even in y, inside L_0(s) with 1 ± m."""
    if modulation == 0.0:
        return ConstantFactor(2.0 - 2.0 * s)
    base = 2.0 - 2.0 * s

    def factor(x: FloatArray, y: FloatArray) -> FloatArray:
        return base * (1.0 + modulation * np.cos(x[..., 0]) * np.cos(np.linalg.norm(y, axis=-1)))

    return factor


def example_1_1_problem(
    gamma: float,
    theta: float,
    d: int,
    s: float,
    *,
    family_size: int = 1,
    modulation: float = 0.0,
    cost_exponent: float | None = None,
    k0: float = 1.0,
    k1: float = 1.0,
    outward: bool = False,
) -> ControlProblem:
    """Inward power drift b(x) = -x|x|^{theta-1} with Lyapunov function |x|^gamma.

    ``family_size=2`` adds a faster, costlier control (drift doubled, cost + 1/2).
    ``outward=True`` flips the drift, which destroys the Lyapunov property.
    """
    check_example_constraints(gamma, theta, s)
    if family_size not in (1, 2):
        raise ValueError("family_size must be 1 or 2")
    if not 0.0 <= modulation < 1.0:
        raise ValueError("modulation must lie in [0, 1)")

    envelope = theta + gamma - 1.0
    mu = theta / (gamma * (2.0 * s - 1.0))
    if cost_exponent is None:
        cost_exponent = min(2.0 * s * theta / (2.0 * s - 1.0), 0.5 * envelope)

    controls: tuple[str, ...] = ("base",) if family_size == 1 else ("base", "fast")
    sign = -1.0 if outward else 1.0
    drift: dict[str, VectorField] = {"base": _InwardDrift(theta, sign)}
    cost: dict[str, ScalarField] = {"base": _SmoothPowerCost(cost_exponent, 1.0, 0.0)}
    if family_size == 2:
        drift["fast"] = _InwardDrift(theta, 2.0 * sign)
        cost["fast"] = _SmoothPowerCost(cost_exponent, 1.0, 0.5)

    factor = modulated_factor(s, modulation)
    kernel = KernelSpec(s, 1.0 - modulation, 1.0 + modulation, {tau: factor for tau in controls})
    lyap = power_lyapunov(
        gamma,
        h=RadialPower(k1, envelope),
        k0=k0,
        mu=mu,
        envelope_exponent=envelope,
        theta=theta,
        k1=k1,
    )
    return ControlProblem(
        controls=controls,
        d=d,
        drift=drift,
        cost=cost,
        kernel=kernel,
        lyapunov=lyap,
        name="example-1-1",
        params={
            "gamma": gamma,
            "theta": theta,
            "s": s,
            "d": d,
            "mu": mu,
            "cost_exponent": cost_exponent,
            "family_size": family_size,
            "modulation": modulation,
            "outward": outward,
        },
    )


class _Constant:
    __slots__ = ("value",)

    def __init__(self, value: float) -> None:
        self.value = float(value)

    def __call__(self, x: FloatArray) -> FloatArray:
        return np.full(x.shape[:-1], self.value)


class _LinearDrift:
    __slots__ = ("scale",)

    def __init__(self, scale: float) -> None:
        self.scale = float(scale)

    def __call__(self, x: FloatArray) -> FloatArray:
        return self.scale * x


def constant_cost_problem(
    kappa: float,
    d: int,
    s: float,
    *,
    controls: int = 2,
    drift_scale: float = 0.5,
) -> ControlProblem:
    """g_τ ≡ kappa with controls pushing in (-) and out (+) at different rates."""
    labels = tuple(f"c{j}" for j in range(controls))
    drift: dict[str, VectorField] = {}
    for j, tau in enumerate(labels):
        sign = -1.0 if j % 2 == 0 else 1.0
        drift[tau] = _LinearDrift(sign * drift_scale * (1 + j // 2))
    cost: dict[str, ScalarField] = {tau: _Constant(kappa) for tau in labels}
    return ControlProblem(
        controls=labels,
        d=d,
        drift=drift,
        cost=cost,
        kernel=KernelSpec.uniform(labels, s),
        name="constant-cost",
        params={"kappa": kappa, "s": s, "d": d, "controls": controls},
    )


class _WaveField:
    """amplitude * sin(omega·x + phase) + offset, broadcast over a trailing axis."""

    __slots__ = ("amplitude", "omega", "phase", "offset")

    def __init__(
        self, amplitude: FloatArray, omega: FloatArray, phase: float, offset: FloatArray
    ) -> None:
        self.amplitude = amplitude
        self.omega = omega
        self.phase = phase
        self.offset = offset

    def __call__(self, x: FloatArray) -> FloatArray:
        wave = np.sin(x @ self.omega + self.phase)
        return self.amplitude * wave[..., None] + self.offset


class _ScalarWave:
    __slots__ = ("inner",)

    def __init__(self, inner: _WaveField) -> None:
        self.inner = inner

    def __call__(self, x: FloatArray) -> FloatArray:
        return self.inner(x)[..., 0]


def random_bounded_problem(
    seed: int,
    *,
    d: int = 1,
    controls: int = 2,
    s: float | None = None,
    discount: float | None = None,
) -> ControlProblem:
    """Smooth bounded random coefficients; identical for identical seeds."""
    rng = np.random.default_rng(seed)
    order = float(rng.uniform(0.6, 0.9)) if s is None else s
    alpha = float(rng.uniform(0.5, 1.0)) if discount is None else discount
    labels = tuple(f"c{j}" for j in range(controls))
    drift: dict[str, VectorField] = {}
    cost: dict[str, ScalarField] = {}
    factors: dict[str, KernelFactor] = {}
    for tau in labels:
        drift[tau] = _WaveField(
            amplitude=rng.uniform(-1.0, 1.0, size=d),
            omega=rng.uniform(0.2, 1.5, size=d),
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            offset=np.zeros(d),
        )
        cost[tau] = _ScalarWave(
            _WaveField(
                amplitude=rng.uniform(0.0, 1.0, size=1),
                omega=rng.uniform(0.2, 1.5, size=d),
                phase=float(rng.uniform(0.0, 2.0 * np.pi)),
                offset=rng.uniform(-1.0, 1.0, size=1),
            )
        )
        factors[tau] = ConstantFactor((2.0 - 2.0 * order) * rng.uniform(0.5, 1.5))
    return ControlProblem(
        controls=labels,
        d=d,
        drift=drift,
        cost=cost,
        kernel=KernelSpec(order, 0.5, 1.5, factors),
        discount=alpha,
        name="random",
        params={"seed": seed, "s": order, "d": d, "controls": controls, "alpha": alpha},
    )


class _GrowingSink:
    """c(x) = -c_circ(1 + |x|^exponent), or -c_circ when exponent is 0."""

    __slots__ = ("c_circ", "exponent")

    def __init__(self, c_circ: float, exponent: float) -> None:
        self.c_circ = c_circ
        self.exponent = exponent

    def __call__(self, x: FloatArray) -> FloatArray:
        r = np.linalg.norm(x, axis=-1)
        if self.exponent == 0.0:
            return np.full(r.shape, -self.c_circ)
        return -self.c_circ * (1.0 + r**self.exponent)


class _BoundedWaveCost:
    __slots__ = ()

    def __call__(self, x: FloatArray) -> FloatArray:
        return 1.0 + 0.5 * np.sin(x[..., 0])


def expanding_drift_problem(
    c_circ: float,
    C0: float,
    gamma: float,
    d: int,
    s: float,
    *,
    zeroth_exponent: float = 0.0,
    kappa: float = 1.0,
    k0: float = 1.0,
) -> ControlProblem:
    """Discounted problem with outward linear drift b(x) = C0·x held by a strong sink.

    Lyapunov pair V = |x|^gamma, h = kappa|x|^gamma; needs c_circ > gamma·C0 and gamma < 2s.
    """
    if not c_circ > 0.0:
        raise ConstraintViolation("c_circ > 0", f"c_circ={c_circ}")
    if not 0.0 < gamma < 2.0 * s:
        raise ConstraintViolation("0 < gamma < 2s", f"gamma={gamma}, 2s={2.0 * s}")
    if zeroth_exponent == 0.0 and not c_circ > gamma * C0:
        raise ConstraintViolation("c_circ > gamma*C0", f"c_circ={c_circ}, gamma*C0={gamma * C0}")
    controls = ("base",)
    return ControlProblem(
        controls=controls,
        d=d,
        drift={"base": _LinearDrift(C0)},
        cost={"base": _BoundedWaveCost()},
        kernel=KernelSpec.uniform(controls, s),
        zeroth={"base": _GrowingSink(c_circ, zeroth_exponent)},
        lyapunov=power_lyapunov(
            gamma, h=RadialPower(kappa, gamma), k0=k0, envelope_exponent=gamma, sigma=1.0
        ),
        name="expanding-drift",
        params={"c_circ": c_circ, "C0": C0, "gamma": gamma, "s": s, "d": d},
    )


class _ScaledIdentity:
    __slots__ = ("scale",)

    def __init__(self, scale: float) -> None:
        self.scale = float(scale)

    def __call__(self, x: FloatArray) -> FloatArray:
        d = x.shape[-1]
        return self.scale * np.broadcast_to(np.eye(d), (*x.shape[:-1], d, d))


class ExponentialLevyDensity:
    """K(x, y) = intensity·exp(-|y|)/|y|^{d+1}; its own majorant."""

    __slots__ = ("intensity",)

    def __init__(self, intensity: float) -> None:
        self.intensity = float(intensity)

    def majorant(self, y: FloatArray) -> FloatArray:
        r = np.maximum(np.linalg.norm(y, axis=-1), _EPS)
        return self.intensity * np.exp(-r) / r ** (y.shape[-1] + 1)

    def __call__(self, x: FloatArray, y: FloatArray) -> FloatArray:
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        return np.broadcast_to(self.majorant(y), shape)


def mixed_constant_problem(
    kappa: float,
    d: int,
    *,
    diffusion: float = 1.0,
    levy_intensity: float = 0.0,
    drift_scale: float = 0.0,
) -> ControlProblem:
    """Local-nonlocal problem with a ≡ diffusion·I, no fractional kernel, g ≡ kappa."""
    controls = ("base",)
    levy = ExponentialLevyDensity(levy_intensity) if levy_intensity > 0.0 else None
    mixed = MixedSpec(
        diffusion={"base": _ScaledIdentity(diffusion)},
        lambda_ell=diffusion,
        Lambda_ell=diffusion,
        levy={"base": levy} if levy is not None else None,
        levy_majorant=levy.majorant if levy is not None else None,
    )
    lyap = None
    if drift_scale > 0.0:
        lyap = power_lyapunov(2.0, h=RadialPower(drift_scale, 2.0), envelope_exponent=2.0)
    return ControlProblem(
        controls=controls,
        d=d,
        drift={"base": _LinearDrift(-drift_scale)},
        cost={"base": _Constant(kappa)},
        mixed=mixed,
        lyapunov=lyap,
        name="mixed-constant",
        params={
            "kappa": kappa,
            "d": d,
            "diffusion": diffusion,
            "levy_intensity": levy_intensity,
            "drift_scale": drift_scale,
        },
    )
