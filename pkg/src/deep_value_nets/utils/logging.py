"""Logging configuration."""

import logging
import os
import sys
from pathlib import Path
from typing import Optional, Tuple, Union

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def resolve_logging(
    configured_level: str = "INFO",
    configured_file: Optional[str] = None,
    level: Optional[str] = None,
    log_file: Optional[Union[str, Path]] = None,
) -> Tuple[str, Optional[Path]]:
    """Effective level and file: command line, then DVN_LOG_* variables, then the config."""
    level = level or os.getenv("DVN_LOG_LEVEL") or configured_level
    log_file = log_file or os.getenv("DVN_LOG_FILE") or configured_file
    return level.upper(), Path(log_file) if log_file else None


def setup_logging(
    level: str = "INFO",
    log_file: Optional[Union[str, Path]] = None,
    format_string: Optional[str] = None,
) -> None:
    """Configure logging for the application.

    Safe to call again once the configuration file has been read; the
    previous handlers are replaced.

    Args:
        level: Logging level (DEBUG, INFO, WARN, ERROR)
        log_file: Optional path to log file
        format_string: Optional custom format string
    """
    handlers = [logging.StreamHandler(sys.stderr)]

    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=format_string or DEFAULT_FORMAT,
        handlers=handlers,
        force=True,
    )

    # numpy floating-point warnings surface as NumericalError in the trainer
    logging.captureWarnings(True)
    logging.getLogger("py.warnings").setLevel(logging.ERROR)
