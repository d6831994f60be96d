from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any

from adapters.artifacts import FileArtifactWriter
from pydantic import ValidationError
from shared.config.loader import ConfigError, load_run_config, resolve_run_file
from shared.contracts.v1.reports import RunMetadata, utc_now
from shared.telemetry.logging import configure_logging

from apps.solver import __version__
from apps.solver.compose import build_ports
from apps.solver.runner import EXIT_INVALID, error_info, failure_report, run

log = logging.getLogger(__name__)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ejh-solve",
        description="Discounted and ergodic nonlocal HJB solves, Lyapunov certificates.",
    )
    ap.add_argument("--config", type=Path, help="Run file (TOML).")
    ap.add_argument("--profile", help="Run file name under configs/runs (or $EJH_CONFIG_DIR).")
    ap.add_argument("--output", help="Output directory; overrides output.directory.")
    ap.add_argument("--workers", type=int, help="Cap on assembly worker threads.")
    ap.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v per radius/alpha, -vv per sweep."
    )
    ap.add_argument("--quiet", action="store_true", help="Warnings and errors only.")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    configure_logging(args.verbose, quiet=args.quiet)
    started = utc_now()

    overrides: dict[str, Any] = {}
    if args.output:
        overrides["output"] = {"directory": args.output}
    if args.workers is not None:
        overrides["workers"] = args.workers

    try:
        config = load_run_config(args.config, profile=args.profile, overrides=overrides)
    except (ValidationError, ConfigError) as exc:
        info = error_info(exc)
        assert info is not None
        log.error("config error: %s", info.detail)
        writer = FileArtifactWriter.create(args.output or "out")
        writer.write_json("report.json", failure_report(info))
        print(info.model_dump_json(), file=sys.stderr)
        return EXIT_INVALID

    writer, trace = build_ports(config)
    outcome = run(config, writer=writer, trace=trace)
    if outcome.report.error is not None:
        print(outcome.report.error.model_dump_json(), file=sys.stderr)

    run_file = resolve_run_file(args.config, args.profile)
    writer.write_json(
        "metadata.json",
        RunMetadata(
            started_at=started,
            finished_at=utc_now(),
            version=__version__,
            argv=list(sys.argv[1:] if argv is None else argv),
            workers=config.workers,
            config_path=None if run_file is None else str(run_file),
        ),
    )
    log.info("status=%s exit=%d", outcome.report.status, outcome.exit_code)
    return outcome.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
