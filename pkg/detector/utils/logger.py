"""
Module-level structured logging.
"""

import logging
import sys

from detector.config import settings

_FORMAT = "[%(asctime)s] %(levelname)-8s %(name)-25s  %(message)s"
_DATEFMT = "%Y-%m-%d %H:%M:%S"

ROOT_LOGGER = "detector"


def _formatter() -> logging.Formatter:
    return logging.Formatter(_FORMAT, datefmt=_DATEFMT)


def get_logger(name: str) -> logging.Logger:
    # children of the package root so run logs attached there see everything
    logger = logging.getLogger(f"{ROOT_LOGGER}.{name}")

    if not logger.handlers:
        logger.setLevel(settings.LOG_LEVEL)

        # stdout carries command results, logs go to stderr
        console = logging.StreamHandler(sys.stderr)
        console.setLevel(settings.LOG_LEVEL)
        console.setFormatter(_formatter())
        logger.addHandler(console)

        if settings.LOG_FILE:
            file_handler = logging.FileHandler(settings.LOG_FILE, encoding="utf-8")
            file_handler.setLevel(logging.INFO)
            file_handler.setFormatter(_formatter())
            logger.addHandler(file_handler)

    return logger


def attach_run_log(path) -> logging.Handler:
    """Copy every INFO+ record of the package into ``path`` until detached."""
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setLevel(logging.INFO)
    handler.setFormatter(_formatter())
    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(logging.DEBUG)
    root.addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    logging.getLogger(ROOT_LOGGER).removeHandler(handler)
    handler.close()
