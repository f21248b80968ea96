"""Command-logging context and exit-code mapping shared by the command-line tools."""

import argparse
import json
import sys
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from typing import Any

import structlog
import torch
import uuid_utils

from hfunet.config import settings
from hfunet.errors import ConfigError, DivergenceError, HFUNetError
from hfunet.logging_config import get_logger, setup_logging

logger = get_logger(__name__)

CommandHandler = Callable[[argparse.Namespace, structlog.stdlib.BoundLogger], dict[str, Any] | None]


@contextmanager
def command_context(tool: str, command: str) -> Iterator[structlog.stdlib.BoundLogger]:
    """Bind an invocation id and log start, completion or failure with elapsed time.

    Args:
        tool: Executable name
        command: Sub-command

    Yields:
        Logger bound to this invocation
    """
    invocation_id = str(uuid_utils.uuid7())
    command_logger = logger.bind(invocation_id=invocation_id, tool=tool, command=command)
    start_time = time.perf_counter()
    command_logger.info(f"Command started: {tool} {command}")
    try:
        yield command_logger
    except Exception as e:
        elapsed_ms = round((time.perf_counter() - start_time) * 1000, 2)
        command_logger.error(
            f"Command failed: {tool} {command} - {e!s}",
            elapsed_ms=elapsed_ms,
            exc_info=not isinstance(e, HFUNetError),
        )
        raise
    elapsed_ms = round((time.perf_counter() - start_time) * 1000, 2)
    command_logger.info(f"Command completed: {tool} {command}", elapsed_ms=elapsed_ms)


def error_payload(e: Exception) -> dict[str, Any]:
    """Machine-readable description of a failure.

    Args:
        e: Raised exception

    Returns:
        ``{"error": {...}}`` with code, exit code, message and error specific details
    """
    if isinstance(e, HFUNetError):
        error: dict[str, Any] = {"code": e.code, "exit_code": e.exit_code, "message": str(e)}
    else:
        error = {"code": HFUNetError.code, "exit_code": HFUNetError.exit_code, "message": str(e)}
    if isinstance(e, ConfigError):
        error["issues"] = [issue._asdict() for issue in e.issues]
    if isinstance(e, DivergenceError):
        error["checkpoint_path"] = e.checkpoint_path
    return {"error": error}


def run_command(tool: str, args: argparse.Namespace, handler: CommandHandler) -> int:
    """Run a command handler and map its outcome to an exit code.

    Progress goes to the log stream; a failure writes one JSON error object to stderr.

    Returns:
        0 on success, the error's exit code otherwise
    """
    try:
        with command_context(tool, args.command) as command_logger:
            summary = handler(args, command_logger)
            if summary:
                command_logger.info("Command result", **summary)
    except Exception as e:
        payload = error_payload(e)
        print(json.dumps(payload), file=sys.stderr)
        return int(payload["error"]["exit_code"])
    return 0


def cli_main(tool: str, parser: argparse.ArgumentParser, argv: list[str] | None = None) -> int:
    """Parse arguments, configure logging and compute, then run the chosen command.

    Logs go to stdout (or ``HFUNET_LOG_FILE``) so stderr only carries error objects.
    """
    args = parser.parse_args(argv)
    setup_logging(tool, stream=sys.stdout)
    if settings.num_threads:
        torch.set_num_threads(settings.num_threads)
    return run_command(tool, args, args.handler)
