# ===============================================================
# blockfactor — Logging
# ===============================================================
# Library modules only ask for named loggers. The CLI is the single
# place that attaches a handler, on stderr; stdout carries data only.
# ===============================================================

import logging
import sys

ROOT_LOGGER = "blockfactor"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def get_logger(name: str) -> logging.Logger:
    """Logger under the package namespace, e.g. get_logger(__name__)."""
    if name.startswith(ROOT_LOGGER):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def setup_logging(level: str | int = "WARNING") -> logging.Logger:
    """Attach one stderr handler to the package logger (idempotent)."""
    logger = logging.getLogger(ROOT_LOGGER)
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    logger.setLevel(level)
    for handler in logger.handlers:
        if getattr(handler, "_blockfactor", False):
            handler.setLevel(level)
            handler.setStream(sys.stderr)
            return logger
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(level)
    handler._blockfactor = True
    logger.addHandler(handler)
    logger.propagate = False
    return logger


def warn(logger: logging.Logger, sink: list[str] | None, message: str) -> None:
    """Log a numerical warning and keep a copy for the result's diagnostics."""
    logger.warning(message)
    if sink is not None:
        sink.append(message)
