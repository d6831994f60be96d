from __future__ import annotations

from datetime import UTC, datetime
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

SCHEMA_V1: Literal[1] = 1

RunMode = Literal["discounted", "ergodic", "certify", "convergence-study"]
RunStatus = Literal["ok", "validation-failed", "not-converged", "invariant-failed"]


def utc_now() -> datetime:
    return datetime.now(UTC)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ErrorInfo(_Strict):
    code: Literal[
        "config", "problem", "constraint", "quadrature", "monotonicity", "expression", "internal"
    ]
    detail: str
    key: str | None = None


class GridInfo(_Strict):
    d: int
    hx: float
    radius: float
    nodes: int
    r_far: float | None = None


class InvariantOutcome(_Strict):
    name: str
    passed: bool
    hard: bool = True
    value: float | None = None
    bound: float | None = None
    detail: str | None = None


class AssumptionDoc(_Strict):
    name: str
    passed: bool
    worst_value: float | None = None
    witness: list[float] | None = None
    detail: str = ""
    proxy: bool = False


class TraceRow(_Strict):
    """One row of the per-iteration convergence trace."""

    stage: str
    iteration: int
    residual: float
    policy_changes: int
    alpha: float | None = None
    radius: float | None = None


class AlphaTraceEntry(_Strict):
    alpha: float
    lambda_alpha: float
    change: float | None = None
    lambda_change: float | None = None
    iterations: int
    converged: bool
    remainder: float | None = None


class RadiusTraceEntry(_Strict):
    radius: float
    nodes: int
    change: float | None = None
    iterations: int
    converged: bool


class GrowthSample(_Strict):
    radius: float
    ratio: float


class EnvelopeDoc(_Strict):
    k0: float
    k1: float
    exponent: float


class ViolationDoc(_Strict):
    node: int
    x: list[float]
    value: float
    bound: float
    margin: float


class CertificateDoc(_Strict):
    schema_version: Literal[1] = Field(default=SCHEMA_V1)
    problem: str
    grid: GridInfo
    exponents: dict[str, float | None]
    envelope: EnvelopeDoc
    worst_margin: float
    violations: list[ViolationDoc]
    tail_mode: str
    fit: str
    scope: Literal["grid-nodes"] = "grid-nodes"


class StencilEntry(_Strict):
    node: int
    control: str
    x: list[float]
    targets: list[int]
    weights: list[float]
    diagonal: float
    constant: float
    exterior_mass: float


class StencilDump(_Strict):
    schema_version: Literal[1] = Field(default=SCHEMA_V1)
    problem: str
    grid: GridInfo
    exterior: str
    entries: list[StencilEntry]


class StudyEntry(_Strict):
    hx: float
    nodes: int
    lambda_star: float | None = None
    converged: bool


class StudyDelta(_Strict):
    coarse_hx: float
    fine_hx: float
    sup_diff: float
    lambda_delta: float | None = None


class StudyReport(_Strict):
    window_radius: float
    runs: list[StudyEntry]
    deltas: list[StudyDelta]


class RunReport(_Strict):
    """Body of report.json. Carries no timestamps, so repeated runs are byte-identical."""

    schema_version: Literal[1] = Field(default=SCHEMA_V1)
    mode: RunMode | None = None
    status: RunStatus
    exit_code: int
    problem: str | None = None
    parameters: dict[str, Any] = Field(default_factory=dict)
    grid: GridInfo | None = None
    summary: dict[str, float | int | bool | str | None] = Field(default_factory=dict)
    lambda_star: float | None = None
    invariants: list[InvariantOutcome] = Field(default_factory=list)
    validation: list[AssumptionDoc] = Field(default_factory=list)
    alpha_trace: list[AlphaTraceEntry] = Field(default_factory=list)
    radius_trace: list[RadiusTraceEntry] = Field(default_factory=list)
    growth_report: list[GrowthSample] = Field(default_factory=list)
    study: StudyReport | None = None
    error: ErrorInfo | None = None


class RunMetadata(_Strict):
    """Wall-clock and environment facts kept out of report.json."""

    schema_version: Literal[1] = Field(default=SCHEMA_V1)
    started_at: datetime = Field(default_factory=utc_now)
    finished_at: datetime | None = None
    version: str
    argv: list[str] = Field(default_factory=list)
    workers: int = 1
    config_path: str | None = None
