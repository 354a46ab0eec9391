"""
Logging configuration for the OTFS LMMSE simulator.
"""
import logging
import sys
from typing import Optional

from .config import get_settings


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once from settings; ``level`` overrides the configured level."""
    settings = get_settings()
    level_name = (level or settings.log_level).upper()

    logging.basicConfig(
        level=getattr(logging, level_name),
        format=settings.log_format,
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True
    )

    # numpy/scipy RuntimeWarning and LinAlgWarning go through the log
    logging.captureWarnings(True)
    logging.getLogger("uvicorn.access").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


class LoggerMixin:
    """Gives service classes a ``self.logger`` named after their module and class."""

    @property
    def logger(self) -> logging.Logger:
        cls = type(self)
        return get_logger(f"{cls.__module__}.{cls.__qualname__}")
