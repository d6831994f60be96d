from __future__ import annotations

import logging

from rich.console import Console
from rich.logging import RichHandler

_FORMAT = "%(message)s"


def level_for(verbosity: int, *, quiet: bool = False) -> int:
    if quiet:
        return logging.WARNING
    if verbosity >= 2:
        return logging.DEBUG
    if verbosity == 1:
        return logging.INFO
    return logging.WARNING


def configure_logging(verbosity: int = 0, *, quiet: bool = False) -> logging.Logger:
    """Route every logger through one rich handler on stderr.

    ``-v`` shows one line per radius and discount level, ``-vv`` every policy sweep.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
        log_time_format="[%X]",
    )
    handler.setFormatter(logging.Formatter(_FORMAT))
    root.addHandler(handler)
    root.setLevel(level_for(verbosity, quiet=quiet))
    return root
