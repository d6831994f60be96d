from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from typing import Any

from adapters.artifacts.serialize import to_csv_text, to_json_text
from ports.artifacts import ArtifactWriterPort


class InMemoryArtifactWriter(ArtifactWriterPort):
    def __init__(self) -> None:
        self.files: dict[str, str] = {}

    def write_json(self, name: str, document: Any) -> str:
        self.files[name] = to_json_text(document)
        return name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
        self.files[name] = to_csv_text(header, rows)
        return name

    def json(self, name: str) -> Any:
        return json.loads(self.files[name])
