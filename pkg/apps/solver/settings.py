from __future__ import annotations

from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from domain.problem.families import check_example_constraints

RunMode = Literal["discounted", "ergodic", "certify", "convergence-study"]
ExteriorName = Literal["zero", "reflect", "cost-over-alpha"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# --- problem families ---------------------------------------------------------


class Example11Config(_Section):
    family: Literal["example-1-1"] = "example-1-1"
    gamma: float
    theta: float
    s: float
    d: Literal[1, 2] = 1
    family_size: Literal[1, 2] = 1
    modulation: float = Field(default=0.0, ge=0.0, lt=1.0)
    cost_exponent: float | None = None
    outward: bool = False
    k0: float = Field(default=1.0, gt=0.0)
    k1: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def _constraint_chain(self) -> Example11Config:
        check_example_constraints(self.gamma, self.theta, self.s)
        return self


class ConstantCostConfig(_Section):
    family: Literal["constant-cost"] = "constant-cost"
    kappa: float = 1.0
    s: float = Field(default=0.75, gt=0.5, lt=1.0)
    d: Literal[1, 2] = 1
    controls: int = Field(default=2, ge=1)
    drift_scale: float = 0.5


class RandomBoundedConfig(_Section):
    family: Literal["random-bounded"] = "random-bounded"
    seed: int = 0
    d: Literal[1, 2] = 1
    controls: int = Field(default=2, ge=1)
    s: float | None = Field(default=None, gt=0.5, lt=1.0)


class ExpandingDriftConfig(_Section):
    family: Literal["expanding-drift"] = "expanding-drift"
    c_circ: float = Field(gt=0.0)
    C0: float
    gamma: float = Field(gt=0.0)
    s: float = Field(gt=0.5, lt=1.0)
    d: Literal[1, 2] = 1
    zeroth_exponent: float = Field(default=0.0, ge=0.0)
    kappa: float = Field(default=1.0, gt=0.0)
    k0: float = Field(default=1.0, gt=0.0)


class MixedConstantConfig(_Section):
    family: Literal["mixed-constant"] = "mixed-constant"
    kappa: float = 1.0
    d: Literal[1, 2] = 1
    diffusion: float = Field(default=1.0, gt=0.0)
    levy_intensity: float = Field(default=0.0, ge=0.0)
    drift_scale: float = Field(default=0.0, ge=0.0)


class ControlExpressions(_Section):
    """Coefficients of one control as expression strings."""

    drift: list[str]
    cost: str
    kernel: str | None = None
    zeroth: str | None = None
    diffusion: list[list[str]] | None = None


class LyapunovExpressions(_Section):
    V: str
    h: str
    k0: float = Field(default=1.0, gt=0.0)
    mu: float = Field(default=0.0, ge=0.0)
    envelope_exponent: float | None = None
    growth_exponent: float | None = None


class ExpressionProblemConfig(_Section):
    family: Literal["expression"] = "expression"
    d: Literal[1, 2] = 1
    s: float | None = Field(default=None, gt=0.5, lt=1.0)
    lambda_ell: float = Field(default=1.0, gt=0.0)
    Lambda_ell: float = Field(default=1.0, gt=0.0)
    controls: dict[str, ControlExpressions]
    lyapunov: LyapunovExpressions | None = None

    @model_validator(mode="after")
    def _shapes(self) -> ExpressionProblemConfig:
        if not self.controls:
            raise ValueError("at least one control is required")
        if self.Lambda_ell < self.lambda_ell:
            raise ValueError("Lambda_ell must be >= lambda_ell")
        for name, c in self.controls.items():
            if len(c.drift) != self.d:
                raise ValueError(f"control {name!r}: drift needs {self.d} components")
            if c.kernel is not None and self.s is None:
                raise ValueError(f"control {name!r} has a kernel but s is not set")
            if c.diffusion is not None and (
                len(c.diffusion) != self.d or any(len(row) != self.d for row in c.diffusion)
            ):
                raise ValueError(f"control {name!r}: diffusion must be {self.d}x{self.d}")
        has_kernel = {c.kernel is not None for c in self.controls.values()}
        has_local = {c.diffusion is not None for c in self.controls.values()}
        if len(has_kernel) > 1 or len(has_local) > 1:
            raise ValueError("kernel and diffusion must be given for all controls or none")
        return self


ProblemConfig = Annotated[
    Example11Config
    | ConstantCostConfig
    | RandomBoundedConfig
    | ExpandingDriftConfig
    | MixedConstantConfig
    | ExpressionProblemConfig,
    Field(discriminator="family"),
]


# --- numerics -----------------------------------------------------------------


class GridConfig(_Section):
    hx: float = Field(default=0.25, gt=0.0)
    radii: list[float] = Field(default_factory=lambda: [4.0, 8.0])
    r_far_margin: float = Field(default=1.0, ge=1.0)
    tail_extent: float = Field(default=1.0, ge=1.0)
    inner_radius: float | None = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _schedule(self) -> GridConfig:
        if not self.radii:
            raise ValueError("radii must not be empty")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:], strict=False)):
            raise ValueError(f"radii {self.radii} must be strictly increasing")
        if self.radii[0] < 4.0 * self.hx * (1.0 - 1e-12):
            raise ValueError(f"smallest radius {self.radii[0]} is below 4*hx={4.0 * self.hx}")
        return self


def _halving() -> list[float]:
    return [0.5 / 2**k for k in range(5)]


class SolverConfig(_Section):
    tol: float = Field(default=1e-6, gt=0.0)
    solver_tol: float = Field(default=1e-10, gt=0.0)
    domain_tol: float | None = Field(default=None, ge=0.0)
    max_iter: int = Field(default=60, ge=1)
    linear: Literal["auto", "direct", "gmres"] = "auto"
    alpha: float | None = Field(default=None, gt=0.0, lt=1.0)
    alphas: list[float] = Field(default_factory=_halving)
    exterior: ExteriorName | None = None
    uniqueness_probe: bool = True
    probe_factor: float = Field(default=0.8, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _alphas(self) -> SolverConfig:
        if not self.alphas:
            raise ValueError("alphas must not be empty")
        if any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ValueError(f"alphas {self.alphas} must lie in (0, 1)")
        if any(b >= a for a, b in zip(self.alphas, self.alphas[1:], strict=False)):
            raise ValueError(f"alphas {self.alphas} must be strictly decreasing")
        return self


class StudyConfig(_Section):
    base: Literal["discounted", "ergodic"] = "ergodic"
    levels: int = Field(default=3, ge=2, le=4)


class OutputConfig(_Section):
    directory: str = "out"
    trace: bool = True
    stencil_nodes: list[int] | None = None


class RunConfig(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="EJH_", env_nested_delimiter="__", extra="forbid", frozen=True
    )

    mode: RunMode = "ergodic"
    problem: ProblemConfig = Field(default_factory=ConstantCostConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    study: StudyConfig = Field(default_factory=StudyConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    workers: int = Field(default=1, ge=1)

    @property
    def exterior(self) -> ExteriorName:
        if self.solver.exterior is not None:
            return self.solver.exterior
        base = self.study.base if self.mode == "convergence-study" else self.mode
        return "zero" if base == "discounted" else "reflect"
