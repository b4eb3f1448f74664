import asyncio
import json
from pathlib import Path
from typing import Annotated

import typer
from pydantic import ValidationError
from rich.table import Table

from app.commands.common import (
    ConfigOption,
    SeedOption,
    console,
    load_settings,
    reporting,
)
from app.commands.generate import SEED_DATA_DIR
from app.database import SqlSandbox
from app.dependencies import get_display_service, get_use_cases
from app.model import (
    IntPropertyFilter,
    NumericOperator,
    QueryRequest,
    TextAggregation,
    TextMetric,
)
from app.services.engine import (
    GroupedResult,
    ObjectResults,
    QueryEngine,
    ResultSet,
    Row,
)
from app.services.queries import QueryError, validate
from app.services.seeding import read_seed_data, seed_use_case
from app.services.sql import SqlCompileError, compile_to_sql

MAX_ROWS = 20

DEFAULT_QUERY = QueryRequest(
    collection_name="Menus",
    integer_property_filter=IntPropertyFilter(
        property_name="price", operator=NumericOperator.LT, value=20
    ),
    text_property_aggregation=TextAggregation(
        property_name="menuItem", metric=TextMetric.COUNT
    ),
)


def parse_query(text: str | None) -> QueryRequest:
    """Parses the query arguments of a tool call.

    Raises:
        QueryError: if the text is not a valid query.
    """
    if text is None:
        return DEFAULT_QUERY
    try:
        return QueryRequest.model_validate_json(text)
    except ValidationError as e:
        raise QueryError(f"Invalid query arguments: {e}") from e


def rows_table(rows: tuple[Row, ...] | list[Row]) -> Table:
    """Returns at most MAX_ROWS rows as a table."""
    columns = list(rows[0]) if rows else []
    table = Table(*columns, caption=f"{len(rows)} rows")
    for row in rows[:MAX_ROWS]:
        table.add_row(*(str(row[c]) for c in columns))
    return table


def render_result(result: ResultSet) -> None:
    """Prints an engine result."""
    match result:
        case ObjectResults():
            console.print(rows_table(result.rows))
        case GroupedResult():
            table = Table(result.property_name, "Result")
            for group in result.groups:
                value = group.result
                shown = (
                    f"{len(value.rows)} rows"
                    if isinstance(value, ObjectResults)
                    else value.model_dump_json()
                )
                table.add_row(str(group.key), shown)
            console.print(table)
        case _:
            console.print_json(result.model_dump_json())


def demo(
    query: Annotated[
        str | None,
        typer.Argument(help="Query arguments as JSON; defaults to a menu count."),
    ] = None,
    schema: Annotated[
        str, typer.Option("--schema", help="Use case to query.")
    ] = "restaurants",
    use_cases: Annotated[
        Path | None,
        typer.Option("--use-cases", file_okay=False, help="Generated use cases."),
    ] = None,
    seed_data: Annotated[
        Path | None,
        typer.Option(
            "--seed-data",
            dir_okay=False,
            help="Seed data file; generated from --seed when absent.",
        ),
    ] = None,
    seed: SeedOption = None,
    config: ConfigOption = None,
) -> None:
    """Execute a query over seeded data and show its SQL counterpart."""
    with reporting():
        settings = load_settings(config)
        use_case = get_use_cases([schema], use_cases, settings)[schema]
        if seed_data is None and use_cases is not None:
            candidate = use_cases.parent / SEED_DATA_DIR / f"{schema}.json"
            seed_data = candidate if candidate.exists() else None
        data = (
            read_seed_data(seed_data)
            if seed_data is not None
            else seed_use_case(
                use_case,
                seed if seed is not None else settings.generation.seed,
                settings.generation.seed_data,
            )
        )

        display_service = get_display_service()
        validated = validate(parse_query(query), use_case)
        console.print(
            f"Query: {display_service.format_query(validated.query)}", markup=False
        )

        result = QueryEngine(use_case, data, settings.engine).execute(validated)
        render_result(result)

        try:
            statement = compile_to_sql(
                validated,
                top_occurrences_limit=settings.engine.top_occurrences_limit,
            )
        except SqlCompileError as e:
            console.print(f"SQL: not compilable ({e})", markup=False)
            return

        async def fetch() -> list[tuple[object, ...]]:
            async with SqlSandbox() as sandbox:
                await sandbox.load(use_case, data)
                return await sandbox.fetch(statement)

        console.print(f"SQL: {statement}", markup=False)
        console.print(json.dumps(asyncio.run(fetch()), default=str), markup=False)
