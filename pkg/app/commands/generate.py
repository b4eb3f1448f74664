import asyncio
from enum import StrEnum
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
from app.dependencies import Settings, get_pricing, get_provider_config, open_provider
from app.model import ComplexityBucket, GenerationVerdict, UseCase
from app.services.costs import CostLedger
from app.services.generation import (
    CommandGenerator,
    CommandJudge,
    GeneratedDataset,
    GenerationConfiguration,
    LLMCommandGenerator,
    LLMJudge,
    LLMSchemaGenerator,
    SchemaGenerator,
    TemplateCommandGenerator,
    TemplateJudge,
    TemplateSchemaGenerator,
    generate_dataset,
    generate_use_case,
    write_dataset,
    write_verdicts,
)
from app.services.queries import complexity
from app.services.schema_registry import BUILTIN_USE_CASES, PropertyProfile, dump_use_case
from app.services.seeding import seed_use_case, write_seed_data
from app.services.toolgen import ToolMode

logger = structlog.get_logger(__name__)

DATASET_FILE = "dataset.jsonl"
VERDICTS_FILE = "verdicts.jsonl"
USE_CASES_DIR = "use_cases"
SEED_DATA_DIR = "seed_data"


class GeneratorKind(StrEnum):
    """Who writes schemas and commands."""

    TEMPLATE = "template"
    LLM = "llm"


def domain_hints(schemas: int) -> list[str]:
    """Returns the domains of the first ``schemas`` use cases.

    Packaged use cases come first, placeholder domains follow.
    """
    hints = list(BUILTIN_USE_CASES[:schemas])
    hints += [f"domain {n}" for n in range(len(hints) + 1, schemas + 1)]
    return hints


async def _generate_all(
    hints: list[str],
    schema_generator: SchemaGenerator,
    command_generator: CommandGenerator,
    judge: CommandJudge,
    profile: PropertyProfile,
    config: GenerationConfiguration,
) -> list[GeneratedDataset]:
    datasets: list[GeneratedDataset] = []
    for hint in hints:
        use_case = await generate_use_case(
            hint, schema_generator, profile, config.max_schema_attempts
        )
        datasets.append(
            await generate_dataset(use_case, command_generator, judge, config)
        )
    return datasets


async def _run(
    hints: list[str],
    kind: GeneratorKind,
    settings: Settings,
    config: GenerationConfiguration,
    provider: str,
    model: str,
    archive: Path | None,
) -> tuple[list[GeneratedDataset], CostLedger | None]:
    profile = settings.registry.profile
    if kind == GeneratorKind.TEMPLATE:
        datasets = await _generate_all(
            hints,
            TemplateSchemaGenerator(),
            TemplateCommandGenerator(),
            TemplateJudge(),
            profile,
            config,
        )
        return datasets, None

    ledger = CostLedger()
    provider_config = get_provider_config(settings, provider, model, ToolMode.UNIFIED)
    async with open_provider(provider_config, archive) as chat:
        datasets = await _generate_all(
            hints,
            LLMSchemaGenerator(chat, model, ledger),
            LLMCommandGenerator(chat, model, ledger, settings.registry.token_budget),
            LLMJudge(chat, model, ledger),
            profile,
            config,
        )
    return datasets, ledger


def write_generated(
    out: Path,
    datasets: list[GeneratedDataset],
    config: GenerationConfiguration,
) -> None:
    """Writes use cases, seed data, records and the review log.

    Args:
        out (Path): output directory.
        datasets (list[GeneratedDataset]): generated use cases.
        config (GenerationConfiguration): generation configuration.
    """
    records = [record for dataset in datasets for record in dataset.records]
    verdicts: list[GenerationVerdict] = [
        verdict for dataset in datasets for verdict in dataset.verdicts
    ]
    for dataset in datasets:
        use_case: UseCase = dataset.use_case
        path = out / USE_CASES_DIR / f"{use_case.name}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_use_case(use_case), encoding="utf-8")
        write_seed_data(
            out / SEED_DATA_DIR / f"{use_case.name}.json",
            seed_use_case(use_case, config.seed, config.seed_data),
        )
    write_dataset(out / DATASET_FILE, records)
    write_verdicts(out / VERDICTS_FILE, verdicts)
    logger.info(
        "benchmark_written",
        directory=str(out),
        use_cases=len(datasets),
        records=len(records),
    )


def summary_table(datasets: list[GeneratedDataset]) -> Table:
    """Returns records and complexity buckets per use case."""
    table = Table("Schema", "Records", *(b.value.title() for b in ComplexityBucket))
    for dataset in datasets:
        buckets = [complexity(r.ground_truth_query) for r in dataset.records]
        table.add_row(
            dataset.use_case.name,
            str(len(dataset.records)),
            *(str(buckets.count(b)) for b in ComplexityBucket),
        )
    return table


def generate(
    schemas: Annotated[
        int, typer.Option("--schemas", min=1, help="Number of use cases to generate.")
    ] = 1,
    domain: Annotated[
        list[str] | None,
        typer.Option("--domain", help="Domain hint; repeatable, overrides --schemas."),
    ] = None,
    seed: SeedOption = None,
    generator: Annotated[
        GeneratorKind,
        typer.Option("--generator", help="Template generation needs no network."),
    ] = GeneratorKind.TEMPLATE,
    provider: Annotated[
        str, typer.Option("--provider", help="Provider of the LLM generator.")
    ] = "openai",
    model: Annotated[
        str, typer.Option("--model", help="Model of the LLM generator.")
    ] = "gpt-4o",
    variants: Annotated[
        int | None,
        typer.Option("--variants", min=1, help="Phrasings per operator combination."),
    ] = None,
    archive: ArchiveOption = None,
    out: Annotated[
        Path, typer.Option("--out", file_okay=False, help="Output directory.")
    ] = Path("benchmark"),
    config: ConfigOption = None,
) -> None:
    """Generate use cases, seed data and benchmark records.

    The LLM generator reads its credential from the provider's environment
    variable (OPENAI_API_KEY, ANTHROPIC_API_KEY, GEMINI_API_KEY, COHERE_API_KEY
    or TOGETHER_API_KEY).
    """
    with reporting():
        settings = load_settings(config)
        updates: dict[str, int] = {}
        if seed is not None:
            updates["seed"] = seed
        if variants is not None:
            updates["variants"] = variants
        generation = settings.generation.model_copy(update=updates)
        hints = domain or domain_hints(schemas)

        datasets, ledger = asyncio.run(
            _run(hints, generator, settings, generation, provider, model, archive)
        )
        write_generated(out, datasets, generation)
        if ledger is not None:
            write_json(out / "ledger.json", ledger.to_dict(get_pricing()))

        console.print(summary_table(datasets))
        total = sum(len(d.records) for d in datasets)
        console.print(f"{total} records written to {out / DATASET_FILE}")
