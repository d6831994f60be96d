from __future__ import annotations

from collections.abc import Mapping
from typing import Any, Protocol, runtime_checkable

from ports.trace import ConvergenceTracePort, TraceRecord


@runtime_checkable
class _ModelDumpLike(Protocol):
    def model_dump(self) -> Mapping[str, Any]: ...


def row_to_dict(row: Any) -> dict[str, Any]:
    # Accept Pydantic models (v2), plain mappings, or attribute bags.
    if isinstance(row, Mapping):
        return dict(row)
    if isinstance(row, _ModelDumpLike):
        return dict(row.model_dump())
    try:
        return {
            "stage": row.stage,
            "iteration": row.iteration,
            "residual": row.residual,
            "policy_changes": row.policy_changes,
        }
    except AttributeError:
        raise TypeError(
            "trace rows must be a Mapping, an object with model_dump(), or carry "
            f"stage/iteration/residual/policy_changes. Got: {type(row)!r}"
        ) from None


class FakeTracePort(ConvergenceTracePort):
    def __init__(self) -> None:
        self.rows: list[dict[str, Any]] = []
        self.closed = False

    def record(self, row: TraceRecord) -> None:
        self.rows.append(row_to_dict(row))

    def close(self) -> None:
        self.closed = True

    def stages(self) -> list[str]:
        return [r["stage"] for r in self.rows]


class NullTracePort(ConvergenceTracePort):
    def record(self, row: TraceRecord) -> None:
        pass
