from __future__ import annotations

from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

from adapters.artifacts.serialize import to_csv_text, to_json_text
from ports.artifacts import ArtifactWriterPort


class FileArtifactWriter(ArtifactWriterPort):
    """Writes artifacts under one output directory, replacing files atomically."""

    def __init__(self, directory: Path) -> None:
        self.directory = directory

    @classmethod
    def create(cls, directory: str | Path) -> FileArtifactWriter:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        return cls(d)

    def _write(self, name: str, text: str) -> str:
        target = self.directory / name
        tmp = target.with_suffix(target.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(target)
        return str(target)

    def write_json(self, name: str, document: Any) -> str:
        return self._write(name, to_json_text(document))

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
        return self._write(name, to_csv_text(header, rows))
