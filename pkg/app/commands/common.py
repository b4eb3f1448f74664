"""Plumbing shared by the CLI commands."""

import json
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any

import typer
from rich.console import Console

from app.dependencies import ConfigurationError, Settings, get_settings
from app.services.costs import PricingError
from app.services.engine import EngineError
from app.services.evaluation import EvaluationError
from app.services.generation import GenerationError
from app.services.harness import HarnessError
from app.services.providers import ProviderError
from app.services.queries import QueryError
from app.services.schema_registry import SchemaRegistryError
from app.services.seeding import SeedDataError
from app.services.sql import SqlCompileError
from app.services.toolgen import ToolgenError

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3

USAGE_ERRORS: tuple[type[Exception], ...] = (ConfigurationError,)
DATA_ERRORS: tuple[type[Exception], ...] = (
    SchemaRegistryError,
    QueryError,
    ToolgenError,
    EngineError,
    SqlCompileError,
    SeedDataError,
    GenerationError,
    EvaluationError,
    HarnessError,
    PricingError,
)
PROVIDER_ERRORS: tuple[type[Exception], ...] = (ProviderError,)

console = Console()
err_console = Console(stderr=True)

ConfigOption = Annotated[
    Path | None,
    typer.Option(
        "--config",
        help="Settings file; ./querybench.yaml is used when present.",
        dir_okay=False,
    ),
]
SeedOption = Annotated[
    int | None, typer.Option("--seed", help="Seed of every random choice.")
]
ArchiveOption = Annotated[
    Path | None,
    typer.Option(
        "--archive",
        help="Replay archive: read by --provider replay, written by live providers.",
        file_okay=False,
    ),
]


def exit_code_for(error: Exception) -> int | None:
    """Returns the exit code of a known error, None for unexpected ones."""
    if isinstance(error, PROVIDER_ERRORS):
        return EXIT_PROVIDER
    if isinstance(error, USAGE_ERRORS):
        return EXIT_USAGE
    if isinstance(error, DATA_ERRORS):
        return EXIT_DATA
    return None


@contextmanager
def reporting() -> Iterator[None]:
    """Turns module errors into a message on stderr and a nonzero exit.

    Raises:
        typer.Exit: with the exit code of the error's category.
    """
    try:
        yield
    except Exception as e:
        code = exit_code_for(e)
        if code is None:
            raise
        err_console.print(f"Error: {e}", style="red", markup=False, highlight=False)
        raise typer.Exit(code) from e


def load_settings(config: Path | None) -> Settings:
    """Load the settings of a command invocation.

    Raises:
        ConfigurationError: if an explicit settings file does not exist.
    """
    if config is not None and not config.exists():
        raise ConfigurationError(f"Settings file {config} does not exist")
    return get_settings(config)


def write_json(path: Path, data: Any) -> None:
    """Writes indented JSON with a trailing newline."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, default=str) + "\n", encoding="utf-8")
