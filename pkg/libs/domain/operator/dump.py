from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from domain.operator.assembly import DiscreteOperator
from shared.contracts.v1.reports import GridInfo, StencilDump, StencilEntry


def grid_info(opr: DiscreteOperator, r_far: float | None = None) -> GridInfo:
    g = opr.grid
    return GridInfo(d=g.d, hx=g.hx, radius=g.radius, nodes=g.n, r_far=r_far)


def stencil_dump(
    opr: DiscreteOperator, nodes: Sequence[int] | None = None, *, r_far: float | None = None
) -> StencilDump:
    """Per-node, per-control stencil rows in a stable JSON layout (targets sorted by node id)."""
    picked = range(opr.n) if nodes is None else [int(i) for i in nodes]
    entries: list[StencilEntry] = []
    for i in picked:
        for t, tau in enumerate(opr.controls):
            row = opr.matrices[t].getrow(i)
            cols = np.asarray(row.indices)
            vals = np.asarray(row.data)
            order = np.argsort(cols, kind="stable")
            cols, vals = cols[order], vals[order]
            off = cols != i
            diag = float(vals[~off].sum())
            entries.append(
                StencilEntry(
                    node=i,
                    control=tau,
                    x=[float(v) for v in opr.grid.nodes[i]],
                    targets=[int(c) for c in cols[off]],
                    weights=[float(v) for v in vals[off]],
                    diagonal=diag,
                    constant=float(opr.constants[t, i]),
                    exterior_mass=float(opr.exterior_mass[t, i]),
                )
            )
    return StencilDump(
        problem=opr.problem_name,
        grid=grid_info(opr, r_far),
        exterior=opr.exterior.label,
        entries=entries,
    )
