"""Test suite for report rollups and files."""

from pathlib import Path

import pytest

from app.model import DatasetRecord, OutcomeKind, PredictionOutcome, UseCase
from app.services.evaluation import EvalOutcome
from app.services.harness import JudgeVerdict, run_benchmark
from app.services.providers import ProviderConfig, ReplayArchive, ReplayProvider
from app.services.reports import (
    EmptyOutcomes,
    EvalReport,
    MissingRecord,
    build_reports,
    evaluate_runs,
    judgments_table,
    leaderboard_table,
    no_tool_table,
    outcomes_csv,
    render_html,
    to_markdown,
    write_reports,
)
from tests.unit.factories import MODEL_A, MODEL_B

type Runs = list[list[PredictionOutcome]]


@pytest.fixture
async def runs(
    replay_archive: ReplayArchive,
    restaurants: UseCase,
    restaurant_dataset: list[DatasetRecord],
) -> Runs:
    """Provide replayed runs of both test models."""
    provider = ReplayProvider(replay_archive)
    return [
        (
            await run_benchmark(
                restaurant_dataset,
                {restaurants.name: restaurants},
                provider,
                ProviderConfig(model=model),
            )
        ).outcomes
        for model in (MODEL_B, MODEL_A)
    ]


@pytest.fixture
def scored(runs: Runs, restaurant_dataset: list[DatasetRecord]) -> list[EvalOutcome]:
    """Provide the scored outcomes of both runs."""
    return evaluate_runs(restaurant_dataset, runs)


@pytest.fixture
def report(scored: list[EvalOutcome], restaurant_dataset: list[DatasetRecord]) -> EvalReport:
    """Provide the report of both runs without judge rankings."""
    return build_reports(scored, restaurant_dataset)


class TestBuildReports:
    """Test suite for build_reports."""

    def test_leaderboard(self, report: EvalReport) -> None:
        """Test headline scores of a perfect and an imperfect model."""
        assert [row.model for row in report.leaderboard] == [MODEL_A, MODEL_B]
        a, b = leaderboard_table(report)
        assert a[1] == "100.00"
        assert a[5] == "1.000"
        assert b[1] == "71.43"
        assert b[5:8] == ["0.714", "71.43", "14.29"]
        assert b[8] == "1.00"

    def test_buckets_cover_every_record(self, report: EvalReport) -> None:
        """Test that the perfect model is perfect in every bucket."""
        row = report.leaderboard[0]
        assert (row.exact_match_simple, row.exact_match_moderate, row.exact_match_complex) == (
            100.0,
            100.0,
            100.0,
        )

    def test_no_tool_table(self, report: EvalReport) -> None:
        """Test counts of prose replies."""
        assert no_tool_table(report) == [
            [MODEL_A, "63", "0", "0.00", "0", "0.00"],
            [MODEL_B, "63", "9", "14.29", "0", "0.00"],
        ]

    def test_breakdowns(self, report: EvalReport, restaurant_dataset: list[DatasetRecord]) -> None:
        """Test the component and schema breakdowns."""
        (schema,) = report.schemas
        assert (schema.label, schema.records) == ("restaurants", 63)
        groupby = next(row for row in report.components if row.label == "groupby")
        assert groupby.records == sum(
            r.ground_truth_query.groupby_property is not None for r in restaurant_dataset
        )
        assert groupby.exact_match[MODEL_A] == 100.0

    def test_orderings_without_judge(self, report: EvalReport) -> None:
        """Test that only the automatic metrics are ordered."""
        assert report.orderings == {
            "exact_match": [MODEL_A, MODEL_B],
            "ast_score": [MODEL_A, MODEL_B],
        }
        assert report.preference == []

    def test_preference_with_judge(
        self, scored: list[EvalOutcome], restaurant_dataset: list[DatasetRecord]
    ) -> None:
        """Test that judge rankings add a preference table."""
        verdicts = [
            JudgeVerdict(
                record_id="restaurants-01",
                ranks={MODEL_A: 2, MODEL_B: 1},
                explanation="B answers in prose | A filters the wrong field.",
            ),
            JudgeVerdict(
                record_id="restaurants-00",
                ranks={MODEL_A: 1, MODEL_B: 2},
                explanation="A runs the query,\n B declines.",
            ),
            JudgeVerdict(record_id="restaurants-02", ranks={MODEL_A: 1, MODEL_B: 1}),
        ]
        report = build_reports(scored, restaurant_dataset, verdicts)
        assert [(row.model, row.weighted_score) for row in report.preference] == [
            (MODEL_A, 270),
            (MODEL_B, 270),
        ]
        assert report.orderings["preference"] == [MODEL_A, MODEL_B]

        assert [row.record_id for row in report.judgments] == [
            "restaurants-00",
            "restaurants-01",
            "restaurants-02",
        ]
        assert list(report.judgments[1].ranks) == [MODEL_B, MODEL_A]
        assert judgments_table(report)[0] == [
            "restaurants-00",
            f"1. {MODEL_A}, 2. {MODEL_B}",
            "A runs the query, B declines.",
        ]
        markdown = to_markdown(report)
        assert "## Judge rankings" in markdown
        assert "B answers in prose \\| A filters the wrong field." in markdown

        html = render_html(report, restaurant_dataset)
        section = html.split('id="record-model-b-restaurants-00"')[1].split("</section>")[0]
        assert "Judge rank: 2 of 2. A runs the query,\n B declines." in section

    def test_empty(self, restaurant_dataset: list[DatasetRecord]) -> None:
        """Test that there must be something to report."""
        with pytest.raises(EmptyOutcomes):
            build_reports([], restaurant_dataset)

    def test_unknown_record(self, runs: Runs, restaurant_dataset: list[DatasetRecord]) -> None:
        """Test outcomes of records missing from the dataset."""
        with pytest.raises(MissingRecord, match="restaurants-00"):
            evaluate_runs(restaurant_dataset[1:], runs)


class TestReportFiles:
    """Test suite for report files."""

    def test_files_are_reproducible(
        self,
        tmp_path: Path,
        report: EvalReport,
        runs: Runs,
        restaurant_dataset: list[DatasetRecord],
    ) -> None:
        """Test that the same scores always produce the same bytes."""
        predictions = {(o.model, o.record_id): o for run in runs for o in run}
        first = write_reports(tmp_path / "first", report, restaurant_dataset, predictions)
        second = write_reports(tmp_path / "second", report, restaurant_dataset, predictions)

        assert sorted(p.name for p in first) == [
            "components.csv",
            "leaderboard.csv",
            "no_tool.csv",
            "orderings.csv",
            "report.html",
            "report.md",
            "schemas.csv",
            "scores.csv",
        ]
        for a, b in zip(first, second, strict=True):
            assert a.read_bytes() == b.read_bytes()

    def test_html_links_every_prediction(
        self,
        tmp_path: Path,
        report: EvalReport,
        runs: Runs,
        restaurant_dataset: list[DatasetRecord],
    ) -> None:
        """Test the per-record drill-down."""
        predictions = {(o.model, o.record_id): o for run in runs for o in run}
        write_reports(tmp_path, report, restaurant_dataset, predictions)
        html = (tmp_path / "report.html").read_text(encoding="utf-8")
        assert 'id="record-model-b-restaurants-00"' in html
        assert "NO_TOOL: I cannot help with that." in html

    def test_markdown_without_html(
        self, tmp_path: Path, report: EvalReport, restaurant_dataset: list[DatasetRecord]
    ) -> None:
        """Test the markdown report alone."""
        written = write_reports(tmp_path, report, restaurant_dataset, html=False)
        assert not (tmp_path / "report.html").exists()
        assert tmp_path / "report.md" in written
        markdown = to_markdown(report)
        assert markdown.startswith("# Benchmark report\n")
        assert "| Model | Exact Match |" in markdown

    def test_outcomes_csv(self, runs: Runs) -> None:
        """Test raw outcomes with one row per record."""
        lines = outcomes_csv(runs[0]).splitlines()
        assert lines[0].startswith("record_id,model,kind,queries")
        assert len(lines) == 64
        assert lines[1].startswith(f"restaurants-00,{MODEL_B},{OutcomeKind.NO_TOOL}")
