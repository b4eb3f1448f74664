"""Rollups of scored outcomes into leaderboard and breakdown tables."""

import csv
import io
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path

import structlog
from jinja2 import Environment, FileSystemLoader, select_autoescape
from pydantic import BaseModel, ConfigDict, Field

from app import APP_PATH
from app.model import ComplexityBucket, DatasetRecord, PredictionOutcome, QueryRequest
from app.services.display import DisplayService
from app.services.evaluation import (
    EvalOutcome,
    EvaluationConfiguration,
    EvaluationError,
    preference_score,
    score_prediction,
)
from app.services.harness import JudgeVerdict, rank_lists
from app.utils.text import collapse_whitespace

logger = structlog.get_logger(__name__)

TEMPLATES_PATH = APP_PATH / "templates"


class MissingRecord(EvaluationError):
    """Raised when an outcome references a record the dataset lacks."""

    def __init__(self, record_id: str, model: str) -> None:
        """Initialize the error.

        Args:
            record_id (str): unknown record.
            model (str): model that produced the outcome.
        """
        super().__init__(
            f"Outcome of model '{model}' references unknown record '{record_id}'"
        )
        self.record_id = record_id
        self.model = model


class EmptyOutcomes(EvaluationError):
    """Raised when there is nothing to report on."""


COMPONENTS: dict[str, Callable[[QueryRequest], bool]] = {
    "search": lambda q: q.search_query is not None,
    "integer filter": lambda q: q.integer_property_filter is not None,
    "text filter": lambda q: q.text_property_filter is not None,
    "boolean filter": lambda q: q.boolean_property_filter is not None,
    "integer aggregation": lambda q: q.integer_property_aggregation is not None,
    "text aggregation": lambda q: q.text_property_aggregation is not None,
    "boolean aggregation": lambda q: q.boolean_property_aggregation is not None,
    "groupby": lambda q: q.groupby_property is not None,
}


class LeaderboardRow(BaseModel):
    """Headline scores of one model."""

    model_config = ConfigDict(frozen=True)

    model: str
    records: int
    exact_match: float
    exact_match_simple: float | None
    exact_match_moderate: float | None
    exact_match_complex: float | None
    ast_score: float
    routing: float
    no_tool: float
    calls_per_query: float


class BreakdownRow(BaseModel):
    """Exact match per model over one subset of records."""

    model_config = ConfigDict(frozen=True)

    label: str
    records: int
    exact_match: dict[str, float | None]


class NoToolRow(BaseModel):
    """How often a model answered without a usable tool call."""

    model_config = ConfigDict(frozen=True)

    model: str
    records: int
    no_tool: int
    no_tool_rate: float
    malformed: int
    malformed_rate: float


class PreferenceRow(BaseModel):
    """Judge preference totals of one model."""

    model_config = ConfigDict(frozen=True)

    model: str
    weighted_score: int
    first_place_pct: float
    rankings: int


class JudgmentRow(BaseModel):
    """Judge ranking and explanation of one record."""

    model_config = ConfigDict(frozen=True)

    record_id: str
    ranks: dict[str, int]
    explanation: str


class EvalReport(BaseModel):
    """Every table of a scoring run."""

    model_config = ConfigDict(frozen=True)

    models: list[str]
    leaderboard: list[LeaderboardRow]
    components: list[BreakdownRow]
    schemas: list[BreakdownRow]
    no_tool: list[NoToolRow]
    preference: list[PreferenceRow]
    orderings: dict[str, list[str]]
    outcomes: list[EvalOutcome]
    flagged: list[str]
    judgments: list[JudgmentRow] = Field(default_factory=list)


def _pct(hits: int, total: int) -> float:
    return 100 * hits / total if total else 0.0


def _em(outcomes: Sequence[EvalOutcome]) -> float | None:
    if not outcomes:
        return None
    return _pct(sum(o.exact_match for o in outcomes), len(outcomes))


def evaluate_runs(
    dataset: Sequence[DatasetRecord],
    runs: Sequence[Sequence[PredictionOutcome]],
    config: EvaluationConfiguration | None = None,
) -> list[EvalOutcome]:
    """Scores the outcomes of every run against the dataset.

    Args:
        dataset (Sequence[DatasetRecord]): ground truth.
        runs (Sequence[Sequence[PredictionOutcome]]): outcomes per run.
        config (EvaluationConfiguration | None, optional): scorer configuration.

    Raises:
        MissingRecord: if an outcome references an unknown record.

    Returns:
        list[EvalOutcome]: scores ordered by model and record id.
    """
    records = {record.record_id: record for record in dataset}
    scored: list[EvalOutcome] = []
    for outcomes in runs:
        for outcome in outcomes:
            record = records.get(outcome.record_id)
            if record is None:
                raise MissingRecord(outcome.record_id, outcome.model)
            scored.append(score_prediction(record, outcome, config))
    return sorted(scored, key=lambda o: (o.model, o.record_id))


def _leaderboard_row(model: str, outcomes: Sequence[EvalOutcome]) -> LeaderboardRow:
    def bucket(b: ComplexityBucket) -> float | None:
        return _em([o for o in outcomes if o.complexity == b])

    with_calls = [o.calls for o in outcomes if o.calls]
    return LeaderboardRow(
        model=model,
        records=len(outcomes),
        exact_match=_em(outcomes) or 0.0,
        exact_match_simple=bucket(ComplexityBucket.SIMPLE),
        exact_match_moderate=bucket(ComplexityBucket.MODERATE),
        exact_match_complex=bucket(ComplexityBucket.COMPLEX),
        ast_score=sum(o.ast_score for o in outcomes) / len(outcomes),
        routing=_pct(sum(o.routed_correctly for o in outcomes), len(outcomes)),
        no_tool=_pct(sum(o.no_tool for o in outcomes), len(outcomes)),
        calls_per_query=sum(with_calls) / len(with_calls) if with_calls else 0.0,
    )


def _ordering(scores: Mapping[str, float]) -> list[str]:
    return sorted(scores, key=lambda model: (-scores[model], model))


def build_reports(
    outcomes: Sequence[EvalOutcome],
    dataset: Sequence[DatasetRecord],
    verdicts: Sequence[JudgeVerdict] = (),
    config: EvaluationConfiguration | None = None,
) -> EvalReport:
    """Rolls scored outcomes up into every report table.

    All rollups are plain means over the relevant records. The leaderboard is
    ordered by exact match; the orderings table lists the model order under
    each metric side by side.

    Args:
        outcomes (Sequence[EvalOutcome]): scored outcomes of all models.
        dataset (Sequence[DatasetRecord]): ground truth.
        verdicts (Sequence[JudgeVerdict], optional): judge rankings, if any.
        config (EvaluationConfiguration | None, optional): preference weights.

    Raises:
        EmptyOutcomes: if there are no outcomes.
        MissingRecord: if an outcome references an unknown record.

    Returns:
        EvalReport: the report.
    """
    if not outcomes:
        raise EmptyOutcomes("No outcomes to report on")
    config = config or EvaluationConfiguration()
    records = {record.record_id: record for record in dataset}
    for outcome in outcomes:
        if outcome.record_id not in records:
            raise MissingRecord(outcome.record_id, outcome.model)

    ordered = sorted(outcomes, key=lambda o: (o.model, o.record_id))
    by_model: dict[str, list[EvalOutcome]] = {}
    for outcome in ordered:
        by_model.setdefault(outcome.model, []).append(outcome)
    models = list(by_model)

    rows = {model: _leaderboard_row(model, by_model[model]) for model in models}
    leaderboard = [rows[m] for m in _ordering({m: r.exact_match for m, r in rows.items()})]

    components = []
    for label, uses in COMPONENTS.items():
        ids = {r.record_id for r in dataset if uses(r.ground_truth_query)}
        components.append(
            BreakdownRow(
                label=label,
                records=len(ids),
                exact_match={
                    m: _em([o for o in by_model[m] if o.record_id in ids]) for m in models
                },
            )
        )

    schemas = []
    for schema_ref in dict.fromkeys(r.schema_ref for r in dataset):
        schemas.append(
            BreakdownRow(
                label=schema_ref,
                records=sum(r.schema_ref == schema_ref for r in dataset),
                exact_match={
                    m: _em([o for o in by_model[m] if o.schema_ref == schema_ref])
                    for m in models
                },
            )
        )

    no_tool = [
        NoToolRow(
            model=m,
            records=len(by_model[m]),
            no_tool=sum(o.no_tool for o in by_model[m]),
            no_tool_rate=_pct(sum(o.no_tool for o in by_model[m]), len(by_model[m])),
            malformed=sum(o.malformed for o in by_model[m]),
            malformed_rate=_pct(sum(o.malformed for o in by_model[m]), len(by_model[m])),
        )
        for m in models
    ]

    preference: list[PreferenceRow] = []
    orderings = {
        "exact_match": [row.model for row in leaderboard],
        "ast_score": _ordering({m: r.ast_score for m, r in rows.items()}),
    }
    if verdicts:
        max_rank = max(len(v.ranks) for v in verdicts)
        scores = preference_score(rank_lists(verdicts), config.preference, max_rank)
        order = _ordering({m: s.weighted_score for m, s in scores.items()})
        preference = [PreferenceRow(**scores[m].model_dump()) for m in order]
        orderings["preference"] = order

    judgments = [
        JudgmentRow(
            record_id=v.record_id,
            ranks=dict(sorted(v.ranks.items(), key=lambda item: (item[1], item[0]))),
            explanation=v.explanation,
        )
        for v in sorted(verdicts, key=lambda v: v.record_id)
    ]

    flagged = sorted(f"{o.model}:{o.record_id}" for o in ordered if o.extra_slots)
    logger.info(
        "report_built", models=len(models), outcomes=len(ordered), flagged=len(flagged)
    )
    return EvalReport(
        models=models,
        leaderboard=leaderboard,
        components=components,
        schemas=schemas,
        no_tool=no_tool,
        preference=preference,
        orderings=orderings,
        outcomes=ordered,
        flagged=flagged,
        judgments=judgments,
    )


LEADERBOARD_HEADERS = [
    "Model",
    "Exact Match",
    "Simple",
    "Moderate",
    "Complex",
    "AST Score",
    "Routing",
    "No Tool",
    "Calls/Query",
]


def leaderboard_table(report: EvalReport) -> list[list[str]]:
    """Returns the leaderboard as formatted cells."""
    d = DisplayService
    return [
        [
            row.model,
            d.format_percent(row.exact_match),
            d.format_percent(row.exact_match_simple),
            d.format_percent(row.exact_match_moderate),
            d.format_percent(row.exact_match_complex),
            d.format_score(row.ast_score),
            d.format_percent(row.routing),
            d.format_percent(row.no_tool),
            f"{row.calls_per_query:.2f}",
        ]
        for row in report.leaderboard
    ]


def breakdown_table(report: EvalReport, rows: Sequence[BreakdownRow]) -> list[list[str]]:
    """Returns a breakdown as formatted cells, one column per model."""
    return [
        [row.label, str(row.records)]
        + [DisplayService.format_percent(row.exact_match[m]) for m in report.models]
        for row in rows
    ]


def no_tool_table(report: EvalReport) -> list[list[str]]:
    """Returns the no-tool table as formatted cells."""
    d = DisplayService
    return [
        [
            row.model,
            str(row.records),
            str(row.no_tool),
            d.format_percent(row.no_tool_rate),
            str(row.malformed),
            d.format_percent(row.malformed_rate),
        ]
        for row in report.no_tool
    ]


def preference_table(report: EvalReport) -> list[list[str]]:
    """Returns the preference table as formatted cells."""
    return [
        [
            row.model,
            str(row.weighted_score),
            DisplayService.format_percent(row.first_place_pct),
            str(row.rankings),
        ]
        for row in report.preference
    ]


def judgments_table(report: EvalReport) -> list[list[str]]:
    """Returns the judge ranking and explanation of every judged record."""
    return [
        [
            row.record_id,
            ", ".join(f"{rank}. {model}" for model, rank in row.ranks.items()),
            collapse_whitespace(row.explanation),
        ]
        for row in report.judgments
    ]


def orderings_table(report: EvalReport) -> list[list[str]]:
    """Returns the model order under every metric, one row per position."""
    metrics = list(report.orderings)
    depth = max(len(order) for order in report.orderings.values())
    return [
        [str(position + 1)]
        + [
            report.orderings[metric][position]
            if position < len(report.orderings[metric])
            else ""
            for metric in metrics
        ]
        for position in range(depth)
    ]


def tables(report: EvalReport) -> dict[str, tuple[list[str], list[list[str]]]]:
    """Returns every table keyed by file stem with its headers."""
    models = report.models
    result = {
        "leaderboard": (LEADERBOARD_HEADERS, leaderboard_table(report)),
        "components": (
            ["Component", "Records", *models],
            breakdown_table(report, report.components),
        ),
        "schemas": (
            ["Schema", "Records", *models],
            breakdown_table(report, report.schemas),
        ),
        "no_tool": (
            ["Model", "Records", "No Tool", "No Tool %", "Malformed", "Malformed %"],
            no_tool_table(report),
        ),
        "orderings": (["Position", *report.orderings], orderings_table(report)),
    }
    if report.preference:
        result["preference"] = (
            ["Model", "Weighted Score", "First Place %", "Rankings"],
            preference_table(report),
        )
    if report.judgments:
        result["judgments"] = (
            ["Record", "Ranking", "Explanation"],
            judgments_table(report),
        )
    return result


def markdown_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Renders a markdown table."""
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join(["---"] * len(headers)) + " |",
    ]
    lines += [
        "| " + " | ".join(cell.replace("|", "\\|") for cell in row) + " |" for row in rows
    ]
    return "\n".join(lines)


_TITLES = {
    "leaderboard": "Leaderboard",
    "components": "Exact match by query component",
    "schemas": "Exact match by schema",
    "no_tool": "No tool selected",
    "preference": "Judge preference",
    "orderings": "Model order by metric",
    "judgments": "Judge rankings",
}


def to_markdown(report: EvalReport) -> str:
    """Renders every table of a report as markdown."""
    sections = ["# Benchmark report"]
    for name, (headers, rows) in tables(report).items():
        sections.append(f"## {_TITLES[name]}\n\n{markdown_table(headers, rows)}")
    if report.flagged:
        flagged = "\n".join(f"- {item}" for item in report.flagged)
        sections.append(f"## Predictions with several filters or aggregations\n\n{flagged}")
    return "\n\n".join(sections) + "\n"


def to_csv(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Renders a table as comma-separated values."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buffer.getvalue()


SCORE_FIELDS = list(EvalOutcome.model_fields)


def scores_csv(report: EvalReport) -> str:
    """Renders every scored outcome, one row per model and record."""
    rows = [
        [getattr(outcome, field) for field in SCORE_FIELDS] for outcome in report.outcomes
    ]
    return to_csv(SCORE_FIELDS, rows)


def render_html(
    report: EvalReport,
    dataset: Sequence[DatasetRecord],
    predictions: Mapping[tuple[str, str], PredictionOutcome] | None = None,
) -> str:
    """Renders the self-contained HTML report with per-record details.

    Args:
        report (EvalReport): the report.
        dataset (Sequence[DatasetRecord]): ground truth.
        predictions (Mapping[tuple[str, str], PredictionOutcome] | None, optional):
            outcomes keyed by model and record id.

    Returns:
        str: the HTML document.
    """
    environment = Environment(
        loader=FileSystemLoader(TEMPLATES_PATH),
        autoescape=select_autoescape(["html"]),
        keep_trailing_newline=True,
    )
    template = environment.get_template("report.html")
    return template.render(
        report=report,
        tables=tables(report),
        titles=_TITLES,
        records={record.record_id: record for record in dataset},
        judgments={row.record_id: row for row in report.judgments},
        predictions=predictions or {},
        display_service=DisplayService(),
    )


def write_reports(
    directory: Path,
    report: EvalReport,
    dataset: Sequence[DatasetRecord],
    predictions: Mapping[tuple[str, str], PredictionOutcome] | None = None,
    html: bool = True,
) -> list[Path]:
    """Writes the markdown, CSV and optional HTML reports.

    Args:
        directory (Path): output directory.
        report (EvalReport): the report.
        dataset (Sequence[DatasetRecord]): ground truth.
        predictions (Mapping[tuple[str, str], PredictionOutcome] | None, optional):
            outcomes for the HTML drill-down.
        html (bool, optional): also write ``report.html``. Defaults to True.

    Returns:
        list[Path]: written files.
    """
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def write(name: str, content: str) -> None:
        path = directory / name
        path.write_text(content, encoding="utf-8")
        written.append(path)

    write("report.md", to_markdown(report))
    for name, (headers, rows) in tables(report).items():
        write(f"{name}.csv", to_csv(headers, rows))
    write("scores.csv", scores_csv(report))
    if html:
        write("report.html", render_html(report, dataset, predictions))

    logger.info("report_written", directory=str(directory), files=len(written))
    return written


OUTCOME_FIELDS = [
    "record_id",
    "model",
    "kind",
    "queries",
    "response_text",
    "diagnostics",
    "rationale",
    "input_tokens",
    "output_tokens",
    "latency_ms",
]


def outcomes_csv(outcomes: Sequence[PredictionOutcome]) -> str:
    """Renders raw outcomes, one row per record, queries as JSON."""
    display_service = DisplayService()
    rows = [
        [
            outcome.record_id,
            outcome.model,
            outcome.kind,
            " | ".join(display_service.format_query(q) for q in outcome.queries),
            outcome.response_text or "",
            "; ".join(outcome.diagnostics),
            outcome.rationale or "",
            outcome.usage.input_tokens,
            outcome.usage.output_tokens,
            outcome.latency_ms,
        ]
        for outcome in outcomes
    ]
    return to_csv(OUTCOME_FIELDS, rows)
