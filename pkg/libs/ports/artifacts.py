from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Iterable, Sequence
from typing import Any


class ArtifactWriterPort(ABC):
    """Destination for run artifacts: JSON documents and numeric CSV tables."""

    @abstractmethod
    def write_json(self, name: str, document: Any) -> str: ...

    @abstractmethod
    def write_csv(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence[float]]
    ) -> str: ...
