"""
Console logging in the "[TAG] message" format used by every stage.
"""

import logging

_ROOT = "scr"


class _TagFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        tag = record.name.split(".", 1)[-1].upper()
        prefix = f"[{tag}]"
        if record.levelno >= logging.WARNING:
            prefix += f" {record.levelname}:"
        return f"{prefix} {record.getMessage()}"


def get_logger(tag: str) -> logging.Logger:
    """Logger for one component, e.g. get_logger("data") prints as [DATA]."""
    return logging.getLogger(f"{_ROOT}.{tag}")


def configure(verbosity: int = 1) -> None:
    """Install a single stream handler on the package logger.

    verbosity 0 = warnings only, 1 = info, 2 = debug.
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    root = logging.getLogger(_ROOT)
    root.setLevel(level)
    if not any(getattr(h, "_scr", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(_TagFormatter())
        handler._scr = True
        root.addHandler(handler)
