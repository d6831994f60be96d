from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from typing import Any, Protocol, runtime_checkable


@runtime_checkable
class _ModelDumpLike(Protocol):
    def model_dump(self, *, mode: str = ...) -> Mapping[str, Any]: ...


def to_json_text(document: Any) -> str:
    """Stable JSON: sorted keys, two-space indent, trailing newline, non-finite floats as null."""
    if isinstance(document, _ModelDumpLike):
        payload = document.model_dump(mode="json")
    elif isinstance(document, Mapping):
        payload = dict(document)
    else:
        raise TypeError(
            f"expected a Mapping or an object with model_dump(). Got: {type(document)!r}"
        )
    return json.dumps(_finite(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite(value: Any) -> Any:
    """Non-finite floats become null; JSON has no Infinity or NaN."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, Mapping):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_finite(v) for v in value]
    return value


def to_csv_text(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    # repr() keeps full float precision and is deterministic.
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
