"""Logging configuration for the hfunet tools."""

import os
from typing import TextIO

from common.logging_config import configure_structlog, get_logger
from hfunet.config import settings


def setup_logging(service_name: str = "hfunet", stream: TextIO | None = None) -> None:
    """Configure structlog for one of the command-line tools.

    Args:
        service_name: Tool name recorded on every log entry
        stream: Console stream used when no log file is configured, stderr when None
    """
    log_file_path = settings.log_file
    try:
        if log_file_path:
            os.makedirs(os.path.dirname(os.path.abspath(log_file_path)), exist_ok=True)
            configure_structlog(service_name, log_file_path=log_file_path, level=settings.log_level)
        else:
            configure_structlog(service_name, level=settings.log_level, stream=stream)
    except (OSError, PermissionError):
        # Fallback to console logging if file logging fails
        configure_structlog(service_name, level=settings.log_level, stream=stream)


# Structlog is configured automatically when this module is imported
setup_logging()

# Re-export get_logger
__all__ = ["get_logger", "setup_logging"]
