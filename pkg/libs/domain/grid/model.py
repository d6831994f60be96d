from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
import numpy.typing as npt

from domain.errors import InvalidGridError
from domain.types import FloatArray, GridFunction, IntArray, ScalarField

_RADIUS_SLACK = 1e-12
_LATTICE_SLACK = 1e-9

ExteriorKind = Literal["zero", "function", "nearest"]


@dataclass(frozen=True, eq=False)
class Grid:
    """Lattice points of spacing ``hx`` inside the closed ball of radius ``radius``.

    Nodes are stored as integer multi-indices in lexicographic order; coordinates are
    ``index * hx``. The lattice is centred at the origin, so the origin is always a node.
    """

    d: int
    hx: float
    radius: float
    index: IntArray
    half_width: int
    origin_index: int
    _lookup: IntArray = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.index.shape[0])

    @cached_property
    def nodes(self) -> FloatArray:
        pts = self.index.astype(np.float64) * self.hx
        pts.setflags(write=False)
        return pts

    @cached_property
    def norms(self) -> FloatArray:
        r = np.linalg.norm(self.nodes, axis=1)
        r.setflags(write=False)
        return r

    def locate(self, multi: IntArray) -> IntArray:
        """Node ids for lattice multi-indices of shape (..., d); -1 where there is no node."""
        m = np.asarray(multi, dtype=np.int64)
        shifted = m + self.half_width
        inside = np.all((shifted >= 0) & (shifted <= 2 * self.half_width), axis=-1)
        out = np.full(m.shape[:-1], -1, dtype=np.int64)
        if np.any(inside):
            out[inside] = self._lookup[tuple(shifted[inside].T)]
        return out

    def nearest_index(self, points: FloatArray) -> IntArray:
        multi = np.rint(np.asarray(points, dtype=np.float64) / self.hx).astype(np.int64)
        return self.locate(multi)

    def project(self, points: FloatArray) -> IntArray:
        """Node nearest to the radial projection of each point onto the ball."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.d)
        r = np.linalg.norm(pts, axis=1)
        scale = np.minimum(1.0, self.radius / np.maximum(r, np.finfo(float).tiny))
        proj = pts * scale[:, None]
        out = self.nearest_index(proj)
        shrink = 1
        while np.any(out < 0):
            miss = out < 0
            rr = np.maximum(np.linalg.norm(proj[miss], axis=1), np.finfo(float).tiny)
            pulled = proj[miss] * (np.maximum(rr - shrink * self.hx, 0.0) / rr)[:, None]
            out[miss] = self.nearest_index(pulled)
            shrink += 1
        return out.reshape(np.shape(points)[:-1])

    def resolve(self, points: FloatArray) -> tuple[IntArray, npt.NDArray[np.bool_]]:
        """Split points into (nearest node id, outside-the-ball mask).

        Points inside the ball map to their nearest node; ids of outside points are -1.
        """
        pts = np.asarray(points, dtype=np.float64)
        flat = pts.reshape(-1, self.d)
        idx = self.nearest_index(flat)
        outside = np.linalg.norm(flat, axis=1) > self.radius * (1.0 + _RADIUS_SLACK)
        idx[outside] = -1
        miss = ~outside & (idx < 0)
        if np.any(miss):
            idx[miss] = self.project(flat[miss])
        return idx.reshape(pts.shape[:-1]), outside.reshape(pts.shape[:-1])

    def inner_mask(self, radius: float) -> npt.NDArray[np.bool_]:
        return self.norms <= radius * (1.0 + _RADIUS_SLACK)

    def describe(self) -> dict[str, float | int]:
        return {"d": self.d, "hx": self.hx, "radius": self.radius, "nodes": self.n}


def build_grid(d: int, hx: float, R: float, *, min_cells: int = 4) -> Grid:
    """Build the lattice of spacing ``hx`` inside the closed ball ``B_R`` in dimension ``d``.

    ``min_cells`` is the smallest admissible ``R / hx``.
    """
    if d not in (1, 2):
        raise InvalidGridError(f"unsupported dimension d={d}; expected 1 or 2")
    if not np.isfinite(hx) or hx <= 0.0:
        raise InvalidGridError(f"spacing must be positive, got hx={hx}")
    if not np.isfinite(R) or R <= 0.0:
        raise InvalidGridError(f"radius must be positive, got R={R}")
    if R < min_cells * hx * (1.0 - _RADIUS_SLACK):
        raise InvalidGridError(f"radius R={R} is below {min_cells}*hx={min_cells * hx}")

    K = int(np.floor(R / hx + _LATTICE_SLACK))
    axis = np.arange(-K, K + 1, dtype=np.int64)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    keep = (mesh**2).sum(axis=1) * (hx * hx) <= R * R * (1.0 + _RADIUS_SLACK)
    index = np.ascontiguousarray(mesh[keep])

    lookup = np.full((2 * K + 1,) * d, -1, dtype=np.int64)
    lookup[tuple((index + K).T)] = np.arange(index.shape[0], dtype=np.int64)
    index.setflags(write=False)
    lookup.setflags(write=False)

    origin = int(lookup[(K,) * d])
    return Grid(
        d=d,
        hx=float(hx),
        radius=float(R),
        index=index,
        half_width=K,
        origin_index=origin,
        _lookup=lookup,
    )


@dataclass(frozen=True)
class ExteriorRule:
    """How a grid function is continued outside the ball.

    ``zero`` returns 0, ``function`` evaluates ``fn``, ``nearest`` reuses the value of the
    node closest to the radial projection (linear, constant-preserving).
    """

    kind: ExteriorKind = "zero"
    fn: ScalarField | None = field(default=None, compare=False)
    label: str = "zero"

    def __post_init__(self) -> None:
        if self.kind == "function" and self.fn is None:
            raise ValueError("function exterior rule needs a field")

    @classmethod
    def zero(cls) -> ExteriorRule:
        return cls("zero", None, "zero")

    @classmethod
    def function(cls, fn: ScalarField, label: str = "function") -> ExteriorRule:
        return cls("function", fn, label)

    @classmethod
    def constant(cls, value: float) -> ExteriorRule:
        v = float(value)
        return cls("function", lambda x: np.full(np.shape(x)[:-1], v), f"constant({v!r})")

    @classmethod
    def nearest(cls) -> ExteriorRule:
        return cls("nearest", None, "nearest")

    @property
    def is_fixed(self) -> bool:
        """True when exterior values do not depend on the grid function."""
        return self.kind != "nearest"

    def values(self, points: FloatArray) -> FloatArray:
        pts = np.asarray(points, dtype=np.float64)
        shape = pts.shape[:-1]
        if self.kind == "zero":
            return np.zeros(shape)
        if self.kind == "function":
            assert self.fn is not None
            return np.broadcast_to(np.asarray(self.fn(pts), dtype=np.float64), shape).copy()
        raise ValueError("nearest exterior values depend on the grid function; use extend()")


def extend(grid: Grid, values: GridFunction, rule: ExteriorRule, points: FloatArray) -> FloatArray:
    """Evaluate a grid function at arbitrary points of shape (..., d) using ``rule`` outside."""
    pts = np.asarray(points, dtype=np.float64)
    flat = pts.reshape(-1, grid.d)
    idx, outside = grid.resolve(flat)

    u = np.asarray(values, dtype=np.float64)
    out = np.empty(flat.shape[0])
    out[~outside] = u[idx[~outside]]
    if np.any(outside):
        if rule.kind == "nearest":
            out[outside] = u[grid.project(flat[outside])]
        else:
            out[outside] = rule.values(flat[outside])
    return out.reshape(pts.shape[:-1])


def evaluate_extended(
    grid: Grid, values: GridFunction, rule: ExteriorRule, x: FloatArray | float
) -> float:
    point = np.asarray(x, dtype=np.float64).reshape(1, grid.d)
    return float(extend(grid, values, rule, point)[0])
