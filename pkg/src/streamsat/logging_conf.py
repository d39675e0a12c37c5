"""Logging configuration for streamsat."""
from __future__ import annotations

import logging
import sys
from typing import Optional, TextIO

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# per-cell and per-restart messages; only shown with --verbose
_CHATTY = ("streamsat.solver",)


class _StreamsatHandler(logging.StreamHandler):
    """Marker type so a second call replaces rather than stacks handlers."""


def configure_logging(verbose: bool, stream: Optional[TextIO] = None) -> logging.Logger:
    """Attach a single handler to the ``streamsat`` logger.

    Parameters
    ----------
    verbose: bool
        If ``True`` sets logging level to DEBUG, otherwise INFO.
    stream:
        Destination of the records, ``sys.stderr`` by default so reports on
        stdout stay machine readable.
    """
    level = logging.DEBUG if verbose else logging.INFO
    logger = logging.getLogger("streamsat")
    for handler in list(logger.handlers):
        if isinstance(handler, _StreamsatHandler):
            logger.removeHandler(handler)
    handler = _StreamsatHandler(stream if stream is not None else sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)
    logger.setLevel(level)
    for name in _CHATTY:
        logging.getLogger(name).setLevel(logging.DEBUG if verbose else logging.WARNING)
    return logger
