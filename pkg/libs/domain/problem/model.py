from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from domain.errors import ProblemValidationError, UnknownControlError
from domain.types import FloatArray, KernelFactor, MatrixField, ScalarField, VectorField

# Lévy–Itô compensator acts on jumps with |y| < 1.
COMPENSATOR_RADIUS = 1.0


def eval_scalar(fn: ScalarField, x: FloatArray) -> FloatArray:
    """Evaluate a scalar callback and broadcast it to the leading shape of ``x``."""
    return np.broadcast_to(np.asarray(fn(x), dtype=np.float64), x.shape[:-1]).astype(np.float64)


def eval_vector(fn: VectorField, x: FloatArray) -> FloatArray:
    return np.broadcast_to(np.asarray(fn(x), dtype=np.float64), x.shape).astype(np.float64)


def eval_matrix(fn: MatrixField, x: FloatArray) -> FloatArray:
    d = x.shape[-1]
    out = np.asarray(fn(x), dtype=np.float64)
    return np.broadcast_to(out, (*x.shape[:-1], d, d)).astype(np.float64)


def eval_kernel(fn: KernelFactor, x: FloatArray, y: FloatArray) -> FloatArray:
    shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
    return np.broadcast_to(np.asarray(fn(x, y), dtype=np.float64), shape).astype(np.float64)


class ConstantFactor:
    """Kernel density factor that does not depend on (x, y)."""

    __slots__ = ("value",)

    def __init__(self, value: float) -> None:
        self.value = float(value)

    def __call__(self, x: FloatArray, y: FloatArray) -> FloatArray:
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.full(shape, self.value)

    def __repr__(self) -> str:
        return f"ConstantFactor({self.value!r})"


@dataclass(frozen=True)
class KernelSpec:
    """Jump kernels k_τ(x, y)/|y|^{d+2s} sharing one fractional order."""

    s: float
    lambda_ell: float
    Lambda_ell: float
    factors: Mapping[str, KernelFactor]

    def __post_init__(self) -> None:
        if not 0.5 < self.s < 1.0:
            raise ProblemValidationError(f"fractional order s={self.s} outside (1/2, 1)")
        if not 0.0 < self.lambda_ell <= self.Lambda_ell:
            raise ProblemValidationError(
                f"ellipticity constants must satisfy 0 < lambda <= Lambda, got "
                f"{self.lambda_ell}, {self.Lambda_ell}"
            )

    @classmethod
    def uniform(
        cls,
        controls: tuple[str, ...],
        s: float,
        *,
        lambda_ell: float = 1.0,
        Lambda_ell: float = 1.0,
        level: float | None = None,
    ) -> KernelSpec:
        """k_τ ≡ (2-2s)·level for every control (level defaults to lambda)."""
        value = (2.0 - 2.0 * s) * (lambda_ell if level is None else level)
        factor = ConstantFactor(value)
        return cls(s, lambda_ell, Lambda_ell, {tau: factor for tau in controls})

    @property
    def lower(self) -> float:
        return (2.0 - 2.0 * self.s) * self.lambda_ell

    @property
    def upper(self) -> float:
        return (2.0 - 2.0 * self.s) * self.Lambda_ell

    def factor(self, tau: str) -> KernelFactor:
        try:
            return self.factors[tau]
        except KeyError:
            raise UnknownControlError(tau) from None


@dataclass(frozen=True)
class MixedSpec:
    """Local diffusion tr(a_τ D²u) plus a compensated Lévy integral with density K_τ."""

    diffusion: Mapping[str, MatrixField]
    lambda_ell: float = 1.0
    Lambda_ell: float = 1.0
    levy: Mapping[str, KernelFactor] | None = None
    levy_majorant: Callable[[FloatArray], FloatArray] | None = None

    @property
    def compensator_radius(self) -> float:
        return COMPENSATOR_RADIUS


@dataclass(frozen=True)
class LyapunovData:
    V: ScalarField
    grad: VectorField
    hessian: MatrixField
    h: ScalarField
    k0: float
    mu: float = 0.0
    gamma: float | None = None
    theta: float | None = None
    sigma: float | None = None
    # decay law of the envelope h; theta + gamma - 1 for the power family
    envelope_exponent: float | None = None
    # V(x) = |x|^growth_exponent far out, when known
    growth_exponent: float | None = None
    ray_radius: float = 1.0
    k1: float | None = None
    certified: bool = False

    def __post_init__(self) -> None:
        if not self.k0 > 0.0:
            raise ProblemValidationError(f"k0 must be positive, got {self.k0}")
        if self.mu < 0.0:
            raise ProblemValidationError(f"mu must be nonnegative, got {self.mu}")


def _shifted(fn: ScalarField, kappa: float) -> ScalarField:
    def shifted(x: FloatArray) -> FloatArray:
        return eval_scalar(fn, x) + kappa

    return shifted


def _scaled(fn: ScalarField, kappa: float) -> ScalarField:
    def scaled(x: FloatArray) -> FloatArray:
        return eval_scalar(fn, x) * kappa

    return scaled


@dataclass(frozen=True)
class ControlProblem:
    """Finite family of controlled generators L_τ with running costs g_τ.

    The zeroth-order coefficient is ``zeroth_τ(x) - discount``; either part may be absent.
    """

    controls: tuple[str, ...]
    d: int
    drift: Mapping[str, VectorField]
    cost: Mapping[str, ScalarField]
    kernel: KernelSpec | None = None
    zeroth: Mapping[str, ScalarField] | None = None
    discount: float | None = None
    mixed: MixedSpec | None = None
    lyapunov: LyapunovData | None = None
    name: str = "custom"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.controls:
            raise ProblemValidationError("control set is empty")
        if len(set(self.controls)) != len(self.controls):
            raise ProblemValidationError(f"duplicate control labels in {self.controls}")
        if self.d not in (1, 2):
            raise ProblemValidationError(f"unsupported dimension d={self.d}")
        if self.discount is not None and not self.discount > 0.0:
            raise ProblemValidationError(f"discount must be positive, got {self.discount}")
        tables: dict[str, Mapping[str, Any] | None] = {
            "drift": self.drift,
            "cost": self.cost,
            "zeroth": self.zeroth,
            "kernel": self.kernel.factors if self.kernel else None,
            "diffusion": self.mixed.diffusion if self.mixed else None,
            "levy": self.mixed.levy if self.mixed else None,
        }
        for name, table in tables.items():
            if table is None:
                continue
            missing = [tau for tau in self.controls if tau not in table]
            if missing:
                raise ProblemValidationError(f"{name} has no entry for controls {missing}")

    @property
    def discounted(self) -> bool:
        return self.discount is not None or self.zeroth is not None

    @property
    def has_jumps(self) -> bool:
        return self.kernel is not None

    def control_index(self, tau: str | int) -> int:
        if isinstance(tau, int | np.integer):
            if 0 <= int(tau) < len(self.controls):
                return int(tau)
            raise UnknownControlError(tau)
        try:
            return self.controls.index(tau)
        except ValueError:
            raise UnknownControlError(tau) from None

    def drift_at(self, tau: str, x: FloatArray) -> FloatArray:
        return eval_vector(self.drift[tau], x)

    def cost_at(self, tau: str, x: FloatArray) -> FloatArray:
        return eval_scalar(self.cost[tau], x)

    def zeroth_at(self, tau: str, x: FloatArray) -> FloatArray:
        c = np.zeros(x.shape[:-1])
        if self.zeroth is not None:
            c = c + eval_scalar(self.zeroth[tau], x)
        if self.discount is not None:
            c = c - self.discount
        return c

    def with_discount(self, alpha: float | None) -> ControlProblem:
        return replace(self, discount=alpha)

    def with_lyapunov(self, lyap: LyapunovData | None) -> ControlProblem:
        return replace(self, lyapunov=lyap)

    def shifted_cost(self, kappa: float) -> ControlProblem:
        cost = {tau: _shifted(self.cost[tau], float(kappa)) for tau in self.controls}
        return replace(self, cost=cost, params={**self.params, "cost_shift": float(kappa)})

    def scaled_cost(self, kappa: float) -> ControlProblem:
        cost = {tau: _scaled(self.cost[tau], float(kappa)) for tau in self.controls}
        return replace(self, cost=cost, params={**self.params, "cost_scale": float(kappa)})
