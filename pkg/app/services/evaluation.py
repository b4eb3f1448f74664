"""Scoring of predicted queries against ground truth."""

import math
from collections.abc import Mapping, Sequence
from typing import Self

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    model_validator,
)

from app.model import (
    ComplexityBucket,
    DatasetRecord,
    OutcomeKind,
    PredictionOutcome,
    QueryRequest,
)
from app.services.queries import canonicalize, complexity


class EvaluationError(Exception):
    """Base error of scoring."""


class RankOutOfRange(EvaluationError):
    """Raised when a preference rank lies outside 1..N."""

    def __init__(self, model: str, rank: int, max_rank: int | None) -> None:
        """Initialize the error.

        Args:
            model (str): ranked model.
            rank (int): offending rank.
            max_rank (int | None): highest allowed rank, if bounded.
        """
        bound = f"1..{max_rank}" if max_rank is not None else ">= 1"
        super().__init__(f"Rank {rank} of model '{model}' is outside {bound}")
        self.model = model
        self.rank = rank


class ASTWeights(BaseModel):
    """Weights of the structural alignment score."""

    model_config = ConfigDict(frozen=True)

    collection_weight: float = Field(default=0.40, ge=0, le=1)
    component_weight: float = Field(default=0.15, ge=0, le=1)

    @model_validator(mode="after")
    def validate_total(self) -> Self:
        """Validates that the collection and the four components sum to one.

        Raises:
            ValueError: if the weights do not sum to 1.0.

        Returns:
            Self: validated weights.
        """
        total = self.collection_weight + 4 * self.component_weight
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(
                f"collection_weight + 4 * component_weight must be 1.0, got {total}"
            )
        return self


DEFAULT_POINTS = (100, 70, 50, 35, 25, 20, 15, 10, 5, 0)


class PreferenceWeights(BaseModel):
    """Points per judge rank; the last entry applies to every later rank."""

    model_config = ConfigDict(frozen=True)

    points: tuple[NonNegativeInt, ...] = DEFAULT_POINTS

    @model_validator(mode="after")
    def validate_non_increasing(self) -> Self:
        """Validates that a better rank never earns fewer points.

        Raises:
            ValueError: if the table is empty or increases.

        Returns:
            Self: validated weights.
        """
        if not self.points:
            raise ValueError("The points table must not be empty")
        if any(a < b for a, b in zip(self.points, self.points[1:], strict=False)):
            raise ValueError(f"Points must be non-increasing, got {list(self.points)}")
        return self

    def points_for(self, rank: int) -> int:
        """Returns the points of a rank starting at 1."""
        return self.points[min(rank, len(self.points)) - 1]


class EvaluationConfiguration(BaseModel):
    """Configuration of the scorer."""

    weights: ASTWeights = Field(default_factory=ASTWeights)
    preference: PreferenceWeights = Field(default_factory=PreferenceWeights)
    strict_match: bool = False


class ComponentMatches(BaseModel):
    """Which of the four query components agree."""

    model_config = ConfigDict(frozen=True)

    search: bool = False
    filters: bool = False
    aggregations: bool = False
    groupby: bool = False

    @property
    def count(self) -> int:
        """Returns the number of matching components."""
        return self.search + self.filters + self.aggregations + self.groupby


def exact_match(pred: QueryRequest, truth: QueryRequest, strict: bool = False) -> bool:
    """Returns True if both queries are identical after canonicalization.

    Args:
        pred (QueryRequest): predicted query.
        truth (QueryRequest): ground-truth query.
        strict (bool, optional): compare free text verbatim. Defaults to False.

    Returns:
        bool: True if all nine arguments agree.
    """
    return canonicalize(pred, strict) == canonicalize(truth, strict)


def component_matches(pred: QueryRequest, truth: QueryRequest) -> ComponentMatches:
    """Compares the four components of two queries.

    Search compares presence only. Filters and aggregations compare all
    three slots at once; two absent slots agree.
    """
    return ComponentMatches(
        search=(pred.search_query is None) == (truth.search_query is None),
        filters=(
            pred.integer_property_filter == truth.integer_property_filter
            and pred.text_property_filter == truth.text_property_filter
            and pred.boolean_property_filter == truth.boolean_property_filter
        ),
        aggregations=(
            pred.integer_property_aggregation == truth.integer_property_aggregation
            and pred.text_property_aggregation == truth.text_property_aggregation
            and pred.boolean_property_aggregation == truth.boolean_property_aggregation
        ),
        groupby=pred.groupby_property == truth.groupby_property,
    )


def ast_score(
    pred: QueryRequest | None,
    truth: QueryRequest,
    weights: ASTWeights | None = None,
) -> float:
    """Scores the structural alignment of a prediction.

    Args:
        pred (QueryRequest | None): predicted query, or None when no tool was called.
        truth (QueryRequest): ground-truth query.
        weights (ASTWeights | None, optional): score weights.

    Returns:
        float: 0.0 without a call or on a collection mismatch, otherwise the
            collection weight plus one component weight per matching component.
    """
    if pred is None or pred.collection_name != truth.collection_name:
        return 0.0
    weights = weights or ASTWeights()
    matches = component_matches(canonicalize(pred), canonicalize(truth)).count
    return round(weights.collection_weight + weights.component_weight * matches, 6)


def collection_routing(pred: QueryRequest | None, truth: QueryRequest) -> bool:
    """Returns True if the prediction targets the ground-truth collection."""
    return pred is not None and pred.collection_name == truth.collection_name


class CallScore(BaseModel):
    """Scores of the best call of a prediction."""

    model_config = ConfigDict(frozen=True)

    exact_match: bool = False
    ast_score: float = 0.0
    routed_correctly: bool = False
    components: ComponentMatches = ComponentMatches()
    calls: NonNegativeInt = 0


def best_of(
    queries: Sequence[QueryRequest],
    truth: QueryRequest,
    config: EvaluationConfiguration | None = None,
) -> CallScore:
    """Scores every call and keeps the highest score.

    Exact match holds if any call matches; the AST score, routing and
    components come from the best-scoring call, first call on ties.

    Args:
        queries (Sequence[QueryRequest]): predicted calls.
        truth (QueryRequest): ground-truth query.
        config (EvaluationConfiguration | None, optional): scorer configuration.

    Returns:
        CallScore: the best scores; all zero for no calls.
    """
    config = config or EvaluationConfiguration()
    best = CallScore(calls=len(queries))
    for query in queries:
        score = ast_score(query, truth, config.weights)
        if score > best.ast_score:
            best = CallScore(
                exact_match=best.exact_match,
                ast_score=score,
                routed_correctly=collection_routing(query, truth),
                components=component_matches(canonicalize(query), canonicalize(truth)),
                calls=len(queries),
            )
        if exact_match(query, truth, config.strict_match):
            best = best.model_copy(update={"exact_match": True})
    return best


class EvalOutcome(BaseModel):
    """Scores of one model's answer to one record."""

    model_config = ConfigDict(frozen=True)

    record_id: str
    model: str
    schema_ref: str
    exact_match: bool
    ast_score: float = Field(ge=0, le=1)
    routed_correctly: bool
    no_tool: bool
    malformed: bool = False
    complexity: ComplexityBucket
    search_match: bool = False
    filters_match: bool = False
    aggregations_match: bool = False
    groupby_match: bool = False
    calls: NonNegativeInt = 0
    extra_slots: bool = False

    @model_validator(mode="after")
    def validate_consistency(self) -> Self:
        """Validates the relations between the flags and the score.

        Raises:
            ValueError: if a no-tool outcome scores or an exact match is not 1.0.

        Returns:
            Self: validated outcome.
        """
        if self.no_tool and (self.exact_match or self.ast_score != 0):
            raise ValueError(f"No-tool outcome of '{self.record_id}' cannot score")
        if self.exact_match and self.ast_score != 1.0:
            raise ValueError(
                f"Exact match of '{self.record_id}' must score 1.0, got {self.ast_score}"
            )
        return self


def _has_extra_slots(query: QueryRequest) -> bool:
    return len(query.filters) > 1 or len(query.aggregations) > 1


def score_prediction(
    record: DatasetRecord,
    outcome: PredictionOutcome,
    config: EvaluationConfiguration | None = None,
) -> EvalOutcome:
    """Scores a prediction against its dataset record.

    No-tool and malformed outcomes score zero. Tool calls keep the best call.

    Args:
        record (DatasetRecord): record with the ground truth.
        outcome (PredictionOutcome): the model's answer.
        config (EvaluationConfiguration | None, optional): scorer configuration.

    Returns:
        EvalOutcome: the scores.
    """
    truth = record.ground_truth_query
    queries = outcome.queries if outcome.kind == OutcomeKind.TOOL_CALL else ()
    best = best_of(queries, truth, config)
    return EvalOutcome(
        record_id=record.record_id,
        model=outcome.model,
        schema_ref=record.schema_ref,
        exact_match=best.exact_match,
        ast_score=best.ast_score,
        routed_correctly=best.routed_correctly,
        no_tool=outcome.kind == OutcomeKind.NO_TOOL,
        malformed=outcome.kind == OutcomeKind.MALFORMED,
        complexity=complexity(truth),
        search_match=best.components.search,
        filters_match=best.components.filters,
        aggregations_match=best.components.aggregations,
        groupby_match=best.components.groupby,
        calls=best.calls,
        extra_slots=any(_has_extra_slots(q) for q in queries),
    )


class PreferenceScore(BaseModel):
    """Judge preference totals of one model."""

    model_config = ConfigDict(frozen=True)

    model: str
    weighted_score: int
    first_place_pct: float
    rankings: int


def preference_score(
    rank_lists: Mapping[str, Sequence[int]],
    weights: PreferenceWeights | None = None,
    max_rank: int | None = None,
) -> dict[str, PreferenceScore]:
    """Turns judge ranks into weighted scores and first-place percentages.

    Shared ranks earn the same points and all count as first place.

    Args:
        rank_lists (Mapping[str, Sequence[int]]): ranks per model across queries.
        weights (PreferenceWeights | None, optional): points per rank.
        max_rank (int | None, optional): highest legal rank, N.

    Raises:
        RankOutOfRange: for ranks below 1 or above max_rank.

    Returns:
        dict[str, PreferenceScore]: scores keyed by model, in input order.
    """
    weights = weights or PreferenceWeights()
    scores: dict[str, PreferenceScore] = {}
    for model, ranks in rank_lists.items():
        for rank in ranks:
            if rank < 1 or (max_rank is not None and rank > max_rank):
                raise RankOutOfRange(model, rank, max_rank)
        firsts = sum(1 for rank in ranks if rank == 1)
        scores[model] = PreferenceScore(
            model=model,
            weighted_score=sum(weights.points_for(rank) for rank in ranks),
            first_place_pct=100 * firsts / len(ranks) if ranks else 0.0,
            rankings=len(ranks),
        )
    return scores
