import functools
import logging
import time
from typing import Callable

import click

from marlrank.errors import MarlRankError

logger = logging.getLogger(__name__)


class LoggingMiddleware:
    """Wraps a command callback: logs the call, times it and maps MarlRankError to its exit code."""

    def __init__(self, callback: Callable[..., int | None]):
        self.callback = callback
        functools.update_wrapper(self, callback)

    def __call__(self, *args, **kwargs) -> None:
        ctx = click.get_current_context()
        start_time = time.time()

        # Log command
        given = {name: value for name, value in kwargs.items() if value is not None}
        logger.info("Command: %s %s", ctx.command_path, given)

        try:
            code = self.callback(*args, **kwargs) or 0
        except MarlRankError as e:
            logger.error("%s: %s", type(e).__name__, e.detail)
            click.echo(f"error: {e.detail}", err=True)
            code = e.exit_code

        # Log exit
        process_time = time.time() - start_time
        logger.info("Exit: %s - %.4fs", code, process_time)
        ctx.exit(code)
