import logging
from functools import lru_cache
from typing import Any

from rich.console import Console
from rich.logging import RichHandler

PACKAGE_LOGGER = "flowcheck"

# stdout carries JSON reports, so log records go to stderr
console = Console(stderr=True)


@lru_cache
def get_logger(name: str) -> logging.Logger:
    if name != PACKAGE_LOGGER and not name.startswith(f"{PACKAGE_LOGGER}."):
        name = f"{PACKAGE_LOGGER}.{name}"
    return logging.getLogger(name)


def setup_logging(
    level: str = "WARNING",
    show_path: bool = False,
    **handler_kwargs: Any,
) -> None:
    """Route the package's log records through one rich handler on stderr.

    Only the `flowcheck` logger is configured, so prefect's own handlers on
    the root logger stay in place during campaign runs.

    Args:
        level: The logging level to use
        show_path: Show the emitting module and line, as in debug mode
        **handler_kwargs: Additional kwargs to pass to RichHandler
    """
    package_logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)

    handler = RichHandler(
        console=console,
        show_path=show_path,
        omit_repeated_times=False,
        rich_tracebacks=True,
        log_time_format="[%X]",
        **handler_kwargs,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel(level)
    package_logger.propagate = False
