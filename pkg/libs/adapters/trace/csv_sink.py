from __future__ import annotations

import csv
from pathlib import Path
from typing import IO

from adapters.trace.fakes import row_to_dict
from ports.trace import ConvergenceTracePort, TraceRecord

COLUMNS = ("stage", "iteration", "residual", "policy_changes", "alpha", "radius")


class CsvTracePort(ConvergenceTracePort):
    """Streams trace rows to a CSV file, flushing after every row."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self._fh: IO[str] | None = None
        self._writer: csv.DictWriter[str] | None = None

    @classmethod
    def create(cls, path: str | Path) -> CsvTracePort:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        return cls(p)

    def _open(self) -> csv.DictWriter[str]:
        if self._writer is None:
            self._fh = self.path.open("w", newline="", encoding="utf-8")
            self._writer = csv.DictWriter(self._fh, fieldnames=COLUMNS, extrasaction="ignore")
            self._writer.writeheader()
        return self._writer

    def record(self, row: TraceRecord) -> None:
        data = row_to_dict(row)
        out = {k: ("" if data.get(k) is None else data.get(k)) for k in COLUMNS}
        writer = self._open()
        writer.writerow(out)
        assert self._fh is not None
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
        self._fh = None
        self._writer = None
