import asyncio
import json
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Annotated

import structlog
import typer
from rich.table import Table

from app.commands.common import (
    ArchiveOption,
    ConfigOption,
    console,
    load_settings,
    reporting,
)
from app.commands.generate import DATASET_FILE
from app.commands.run import OUTCOMES_FILE, RUN_FILE
from app.dependencies import Settings, get_provider_config, open_provider
from app.model import DatasetRecord, PredictionOutcome
from app.services.generation import read_dataset
from app.services.harness import (
    JudgeVerdict,
    OutcomeFileError,
    judge_predictions,
    outcomes_by_record,
    read_judgments,
    read_outcomes,
    write_judgments,
)
from app.services.reports import build_reports, evaluate_runs, tables, write_reports
from app.services.toolgen import ToolMode

logger = structlog.get_logger(__name__)

JUDGMENTS_FILE = "judgments.jsonl"


def run_label(outcomes_path: Path) -> str | None:
    """Returns the label of a run from the metadata next to its outcomes.

    Runs outside the unified mode are labelled ``<model> [<mode>]``.

    Raises:
        OutcomeFileError: if the metadata file is unreadable.
    """
    metadata = outcomes_path.parent / RUN_FILE
    if not metadata.exists():
        return None
    try:
        data = json.loads(metadata.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise OutcomeFileError(f"Cannot read run metadata {metadata}: {e}") from e
    model, mode = data.get("model"), data.get("mode", ToolMode.UNIFIED)
    if not model:
        return None
    return model if mode == ToolMode.UNIFIED else f"{model} [{mode}]"


def load_runs(paths: Sequence[Path]) -> list[list[PredictionOutcome]]:
    """Reads outcome files or run directories, labelling each run.

    Raises:
        OutcomeFileError: if a file is unreadable or two runs share a label.
    """
    runs: list[list[PredictionOutcome]] = []
    seen: set[str] = set()
    for path in paths:
        outcomes_path = path / OUTCOMES_FILE if path.is_dir() else path
        outcomes = read_outcomes(outcomes_path)
        label = run_label(outcomes_path)
        if label is not None:
            outcomes = [o.model_copy(update={"model": label}) for o in outcomes]
        labels = {o.model for o in outcomes}
        if labels & seen:
            raise OutcomeFileError(
                f"Runs in {outcomes_path} repeat models {sorted(labels & seen)}"
            )
        seen |= labels
        runs.append(outcomes)
    return runs


async def judge_runs(
    dataset: Sequence[DatasetRecord],
    runs: Sequence[Sequence[PredictionOutcome]],
    settings: Settings,
    provider: str,
    model: str,
    archive: Path | None,
) -> list[JudgeVerdict]:
    """Asks the judge to rank every record answered by several models.

    Args:
        dataset (Sequence[DatasetRecord]): ground truth.
        runs (Sequence[Sequence[PredictionOutcome]]): outcomes per run.
        settings (Settings): loaded settings.
        provider (str): judge provider, or ``replay``.
        model (str): judge model.
        archive (Path | None): replay archive of the judge.

    Returns:
        list[JudgeVerdict]: verdicts in dataset order.
    """
    grouped: Mapping[str, dict[str, PredictionOutcome]] = outcomes_by_record(runs)
    config = get_provider_config(settings, provider, model, ToolMode.UNIFIED)
    semaphore = asyncio.Semaphore(settings.harness.concurrency)
    async with open_provider(config, archive) as judge:

        async def rank(record: DatasetRecord) -> JudgeVerdict:
            async with semaphore:
                return await judge_predictions(
                    record, grouped[record.record_id], judge, model
                )

        judged = [r for r in dataset if len(grouped.get(r.record_id, {})) >= 2]
        verdicts = await asyncio.gather(*(rank(record) for record in judged))
    logger.info("records_judged", judge=model, records=len(verdicts))
    return list(verdicts)


def score(
    outcomes: Annotated[
        list[Path],
        typer.Argument(help="Outcome files or run directories.", exists=True),
    ],
    dataset: Annotated[
        Path, typer.Option("--dataset", dir_okay=False, help="Dataset records.")
    ] = Path("benchmark") / DATASET_FILE,
    strict: Annotated[
        bool, typer.Option("--strict", help="Compare free text verbatim.")
    ] = False,
    judgments: Annotated[
        Path | None,
        typer.Option("--judgments", dir_okay=False, help="Recorded judge verdicts."),
    ] = None,
    judge_provider: Annotated[
        str, typer.Option("--judge-provider", help="Provider of the judge model.")
    ] = "openai",
    judge_model: Annotated[
        str | None,
        typer.Option("--judge-model", help="Rank predictions with this judge model."),
    ] = None,
    archive: ArchiveOption = None,
    html: Annotated[
        bool, typer.Option("--html/--no-html", help="Also write report.html.")
    ] = True,
    out: Annotated[
        Path, typer.Option("--out", file_okay=False, help="Report directory.")
    ] = Path("report"),
    config: ConfigOption = None,
) -> None:
    """Score outcomes against the dataset and write the report tables."""
    with reporting():
        settings = load_settings(config)
        evaluation = settings.evaluation
        if strict:
            evaluation = evaluation.model_copy(update={"strict_match": True})

        records = read_dataset(dataset)
        runs = load_runs(outcomes)
        scored = evaluate_runs(records, runs, evaluation)

        verdicts: list[JudgeVerdict] = []
        if judgments is not None:
            verdicts = read_judgments(judgments)
        elif judge_model is not None:
            verdicts = asyncio.run(
                judge_runs(records, runs, settings, judge_provider, judge_model, archive)
            )

        if verdicts:
            write_judgments(out / JUDGMENTS_FILE, verdicts)
        report = build_reports(scored, records, verdicts, evaluation)
        predictions = {(o.model, o.record_id): o for run in runs for o in run}
        write_reports(out, report, records, predictions, html=html)

        headers, rows = tables(report)["leaderboard"]
        table = Table(*headers)
        for row in rows:
            table.add_row(*row)
        console.print(table)
        console.print(f"Reports written to {out}")
