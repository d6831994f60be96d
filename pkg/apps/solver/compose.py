from __future__ import annotations

from pathlib import Path

from adapters.artifacts import FileArtifactWriter
from adapters.trace import CsvTracePort, NullTracePort
from domain.solvers import ErgodicSettings
from ports.artifacts import ArtifactWriterPort
from ports.trace import ConvergenceTracePort

from apps.solver.settings import RunConfig


def build_ports(
    config: RunConfig, *, directory: str | Path | None = None
) -> tuple[ArtifactWriterPort, ConvergenceTracePort]:
    out = Path(directory) if directory is not None else Path(config.output.directory)
    writer = FileArtifactWriter.create(out)
    trace: ConvergenceTracePort
    if config.output.trace:
        trace = CsvTracePort.create(out / "trace.csv")
    else:
        trace = NullTracePort()
    return writer, trace


def ergodic_settings(config: RunConfig, *, hx: float | None = None) -> ErgodicSettings:
    g, s = config.grid, config.solver
    return ErgodicSettings(
        hx=g.hx if hx is None else hx,
        radii=tuple(g.radii),
        alphas=tuple(s.alphas),
        tol=s.tol,
        domain_tol=s.domain_tol,
        solver_tol=s.solver_tol,
        max_iter=s.max_iter,
        r_far_margin=g.r_far_margin,
        tail_extent=g.tail_extent,
        exterior=config.exterior,
        inner_radius=g.inner_radius,
        linear=s.linear,
        workers=config.workers,
    )
