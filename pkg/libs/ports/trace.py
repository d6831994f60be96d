from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Protocol


class TraceRecord(Protocol):
    stage: str
    iteration: int
    residual: float
    policy_changes: int


class ConvergenceTracePort(ABC):
    """Sink for per-iteration solver rows."""

    @abstractmethod
    def record(self, row: TraceRecord) -> None: ...

    def close(self) -> None:
        return None
