import logging
import sys
from typing import Annotated

import click
import structlog
import typer

from app.commands import register
from app.commands.common import EXIT_USAGE


def configure_logging(verbose: bool = False) -> None:
    """Route structured logs to stderr so stdout carries command output.

    Args:
        verbose (bool, optional): also show debug events. Defaults to False.
    """
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.DEBUG if verbose else logging.INFO
        ),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


cli = typer.Typer(
    name="querybench",
    help="Benchmark database querying through function calling.",
    no_args_is_help=True,
    pretty_exceptions_enable=False,
)


@cli.callback()
def root(
    verbose: Annotated[
        bool, typer.Option("--verbose", "-v", help="Show debug events.")
    ] = False,
) -> None:
    """Generate benchmarks, run models, score outcomes and price runs."""
    configure_logging(verbose)


register(cli)


def main() -> None:
    """Console entry point.

    Exit codes: 0 success, 1 usage, 2 data error, 3 provider error.
    """
    try:
        code = cli(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(EXIT_USAGE)
    except click.Abort:
        sys.exit(EXIT_USAGE)
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
