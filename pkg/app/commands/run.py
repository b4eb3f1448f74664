import asyncio
from datetime import UTC, datetime
from pathlib import Path
from typing import Annotated

import structlog
import typer
from rich.table import Table

from app.commands.common import (
    ArchiveOption,
    ConfigOption,
    SeedOption,
    console,
    load_settings,
    reporting,
    write_json,
)
from app.commands.generate import DATASET_FILE, USE_CASES_DIR
from app.dependencies import (
    get_display_service,
    get_pricing,
    get_provider_config,
    get_use_cases,
    open_provider,
)
from app.model import OutcomeKind
from app.services.generation import read_dataset
from app.services.harness import (
    BenchmarkRun,
    RunMetadata,
    mean_calls_per_query,
    run_benchmark,
    write_outcomes,
)
from app.services.reports import outcomes_csv
from app.services.toolgen import ToolMode

logger = structlog.get_logger(__name__)

OUTCOMES_FILE = "outcomes.jsonl"
RUN_FILE = "run.json"
LEDGER_FILE = "ledger.json"


def write_run(out: Path, run: BenchmarkRun, metadata: RunMetadata) -> None:
    """Writes the outcome exports, the ledger and the run metadata.

    Args:
        out (Path): output directory.
        run (BenchmarkRun): outcomes and ledger.
        metadata (RunMetadata): what the run used.
    """
    write_outcomes(out / OUTCOMES_FILE, run.outcomes)
    (out / "outcomes.csv").write_text(outcomes_csv(run.outcomes), encoding="utf-8")
    write_json(out / LEDGER_FILE, run.ledger.to_dict(get_pricing()))
    write_json(out / RUN_FILE, metadata.model_dump(mode="json"))


def run(
    model: Annotated[str, typer.Option("--model", help="Model to benchmark.")],
    provider: Annotated[
        str,
        typer.Option(
            "--provider",
            help="openai, anthropic, gemini, cohere, together or replay.",
        ),
    ] = "openai",
    mode: Annotated[
        ToolMode, typer.Option("--mode", help="How tools are offered to the model.")
    ] = ToolMode.UNIFIED,
    dataset: Annotated[
        Path, typer.Option("--dataset", dir_okay=False, help="Dataset records.")
    ] = Path("benchmark") / DATASET_FILE,
    use_cases: Annotated[
        Path | None,
        typer.Option(
            "--use-cases",
            file_okay=False,
            help="Use-case directory; defaults to use_cases next to the dataset.",
        ),
    ] = None,
    archive: ArchiveOption = None,
    seed: SeedOption = None,
    out: Annotated[
        Path, typer.Option("--out", file_okay=False, help="Output directory.")
    ] = Path("run"),
    config: ConfigOption = None,
) -> None:
    """Run every dataset record through a model in one harness mode.

    Live providers read their credential from the environment variable named
    in the provider settings, OPENAI_API_KEY for openai, ANTHROPIC_API_KEY for
    anthropic. Credentials are never written to disk.
    """
    with reporting():
        settings = load_settings(config)
        directory = use_cases or dataset.parent / USE_CASES_DIR
        records = read_dataset(dataset)
        schemas = get_use_cases((r.schema_ref for r in records), directory, settings)
        records = read_dataset(dataset, schemas)
        provider_config = get_provider_config(settings, provider, model, mode)

        async def answer() -> BenchmarkRun:
            async with open_provider(provider_config, archive) as chat:
                return await run_benchmark(
                    records,
                    schemas,
                    chat,
                    provider_config,
                    settings.harness,
                    settings.registry.token_budget,
                )

        started_at = datetime.now(UTC)
        result = asyncio.run(answer())
        metadata = RunMetadata.describe(
            provider_config,
            seed if seed is not None else settings.generation.seed,
            dataset,
            len(records),
            started_at,
        )
        write_run(out, result, metadata)

        display_service = get_display_service()
        kinds = [o.kind for o in result.outcomes]
        table = Table("Model", "Mode", "Records", "Tool Calls", "No Tool", "Malformed")
        table.add_row(
            model,
            mode.value,
            str(len(kinds)),
            str(kinds.count(OutcomeKind.TOOL_CALL)),
            str(kinds.count(OutcomeKind.NO_TOOL)),
            str(kinds.count(OutcomeKind.MALFORMED)),
        )
        console.print(table)
        usage = result.ledger.usage().get(model)
        if usage is not None:
            console.print(
                f"Tokens: {display_service.format_tokens(usage.input_tokens)} in, "
                f"{display_service.format_tokens(usage.output_tokens)} out; "
                f"{mean_calls_per_query(result.outcomes):.2f} calls per query"
            )
        console.print(f"Outcomes written to {out / OUTCOMES_FILE}")
