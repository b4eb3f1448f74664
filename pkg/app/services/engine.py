"""In-memory execution of validated queries over seeded collections."""

import math
import operator
import re
import statistics
from collections import Counter, defaultdict
from collections.abc import Callable, Mapping, Sequence
from enum import StrEnum
from functools import lru_cache

import structlog
from pydantic import BaseModel, ConfigDict, Field, PositiveInt

from app.model import (
    Aggregation,
    BooleanMetric,
    BooleanOperator,
    BooleanPropertyFilter,
    CollectionSchema,
    DataType,
    IntMetric,
    IntPropertyFilter,
    NumericOperator,
    PropertyFilter,
    TextAggregation,
    TextMetric,
    TextOperator,
    TextPropertyFilter,
    UseCase,
)
from app.services.queries import MultipleAggregationsPresent, ValidatedQuery
from app.services.search import InvertedIndex, SearchConfiguration

logger = structlog.get_logger(__name__)

type Value = bool | float | str
type Row = dict[str, Value]
type Metric = IntMetric | TextMetric | BooleanMetric

_NUMERIC_OPERATORS: dict[NumericOperator, Callable[[float, float], bool]] = {
    NumericOperator.EQ: operator.eq,
    NumericOperator.LT: operator.lt,
    NumericOperator.GT: operator.gt,
    NumericOperator.LE: operator.le,
    NumericOperator.GE: operator.ge,
}
_EMPTY_SENSITIVE = {"MIN", "MAX", "MEAN", "MEDIAN", "MODE"}


class EngineError(Exception):
    """Base error of query execution."""


class EmptyAggregate(EngineError):
    """Raised when a metric has no value over zero rows."""


class RowViolation(EngineError):
    """Raised when seeded rows do not conform to their collection schema."""


class EngineConfiguration(BaseModel):
    """Configuration of the query engine."""

    search: SearchConfiguration = Field(default_factory=SearchConfiguration)
    top_occurrences_limit: PositiveInt = 5


class AggregateKind(StrEnum):
    """Tag of a scalar aggregate."""

    COUNT = "count"
    NUMBER = "number"
    TEXT = "text"
    PERCENTAGE = "percentage"


class AggregateValue(BaseModel):
    """A tagged scalar aggregate."""

    model_config = ConfigDict(frozen=True)

    kind: AggregateKind
    value: float | str


class Occurrence(BaseModel):
    """A text value with its frequency."""

    model_config = ConfigDict(frozen=True)

    value: str
    count: int


class TopOccurrences(BaseModel):
    """Most frequent values, most frequent first."""

    model_config = ConfigDict(frozen=True)

    occurrences: tuple[Occurrence, ...]


class ObjectResults(BaseModel):
    """Matching rows in result order."""

    model_config = ConfigDict(frozen=True)

    rows: tuple[Row, ...]


type Aggregated = AggregateValue | TopOccurrences


class Group(BaseModel):
    """The result of one group of a grouped query."""

    model_config = ConfigDict(frozen=True)

    key: bool | float | str
    result: ObjectResults | AggregateValue | TopOccurrences


class GroupedResult(BaseModel):
    """Per-group results ordered by group key."""

    model_config = ConfigDict(frozen=True)

    property_name: str
    groups: tuple[Group, ...]


type ResultSet = ObjectResults | AggregateValue | TopOccurrences | GroupedResult


def _conforms(value: object, data_type: DataType) -> bool:
    match data_type:
        case DataType.BOOLEAN:
            return isinstance(value, bool)
        case DataType.NUMBER:
            return isinstance(value, int | float) and not isinstance(value, bool)
        case _:
            return isinstance(value, str)


def check_rows(collection: CollectionSchema, rows: Sequence[Mapping[str, object]]) -> list[Row]:
    """Checks that rows carry exactly the typed properties of their collection.

    Args:
        collection (CollectionSchema): schema of the rows.
        rows (Sequence[Mapping[str, object]]): rows to check.

    Raises:
        RowViolation: on a missing, extra or mistyped value.

    Returns:
        list[Row]: the rows as plain dictionaries.
    """
    expected = {p.name for p in collection.properties}
    checked: list[Row] = []
    for index, row in enumerate(rows):
        keys = set(row)
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise RowViolation(
                f"Row {index} of '{collection.name}' has missing={missing} extra={extra}"
            )
        for prop in collection.properties:
            value = row[prop.name]
            if not _conforms(value, prop.data_type):
                raise RowViolation(
                    f"Row {index} of '{collection.name}': '{prop.name}' must be "
                    f"{prop.data_type}, got {value!r}"
                )
        checked.append(dict(row))  # type: ignore[arg-type]
    return checked


@lru_cache(maxsize=256)
def like_pattern(pattern: str) -> re.Pattern[str]:
    """Compiles a LIKE pattern with ``%`` and ``_`` wildcards to a regex."""
    parts: list[str] = []
    for char in pattern:
        if char == "%":
            parts.append(".*")
        elif char == "_":
            parts.append(".")
        else:
            parts.append(re.escape(char))
    return re.compile("".join(parts), re.DOTALL)


def eval_filter(row: Row, property_filter: PropertyFilter) -> bool:
    """Evaluates a filter against a row.

    Args:
        row (Row): row to test.
        property_filter (PropertyFilter): filter of any kind.

    Returns:
        bool: True if the row passes.
    """
    value = row[property_filter.property_name]
    match property_filter:
        case IntPropertyFilter(operator=op, value=bound):
            return _NUMERIC_OPERATORS[op](float(value), bound)
        case TextPropertyFilter(operator=TextOperator.LIKE, value=pattern):
            return like_pattern(pattern).fullmatch(str(value)) is not None
        case TextPropertyFilter(value=expected):
            return value == expected
        case BooleanPropertyFilter(operator=BooleanOperator.NE, value=expected):
            return value is not expected
        case BooleanPropertyFilter(value=expected):
            return value is expected
    raise TypeError(f"Unsupported filter {property_filter!r}")  # pragma: no cover


def search_rank(
    query_text: str,
    collection: CollectionSchema,
    rows: Sequence[Row],
    limit: int = 10,
    config: SearchConfiguration | None = None,
) -> list[Row]:
    """Ranks rows by relevance of their searchable property to the query.

    Args:
        query_text (str): search text.
        collection (CollectionSchema): schema declaring the searchable property.
        rows (Sequence[Row]): rows to rank.
        limit (int, optional): maximum number of rows. Defaults to 10.
        config (SearchConfiguration | None, optional): ranking parameters.

    Raises:
        EngineError: if the collection has no searchable property.

    Returns:
        list[Row]: matching rows, most relevant first.
    """
    searchable = collection.searchable_property
    if searchable is None:
        raise EngineError(f"Collection '{collection.name}' has no searchable property")
    index = InvertedIndex(
        (str(row[searchable.name]) for row in rows), config or SearchConfiguration()
    )
    return [rows[position] for position in index.rank(query_text, limit=limit)]


def _mode(values: Sequence[Value]) -> Value:
    counts = Counter(values)
    highest = max(counts.values())
    return min(v for v, c in counts.items() if c == highest)  # type: ignore[type-var]


def aggregate(
    values: Sequence[Value],
    metric: Metric,
    data_type: DataType,
    limit: int | None = None,
) -> AggregateValue | TopOccurrences:
    """Computes a metric over the values of one property.

    Args:
        values (Sequence[Value]): property values.
        metric (Metric): metric legal for the data type.
        data_type (DataType): declared data type of the property.
        limit (int | None, optional): number of occurrences for
            TOP_OCCURRENCES. Defaults to 5.

    Raises:
        EmptyAggregate: for MIN/MAX/MEAN/MEDIAN/MODE over no values.

    Returns:
        AggregateValue | TopOccurrences: the aggregate.
    """
    if metric in _EMPTY_SENSITIVE and not values:
        raise EmptyAggregate(f"{metric} is undefined over zero rows")

    match metric:
        case "COUNT":
            return AggregateValue(kind=AggregateKind.COUNT, value=len(values))
        case "TYPE":
            return AggregateValue(kind=AggregateKind.TEXT, value=data_type.value)
        case "MIN":
            return AggregateValue(kind=AggregateKind.NUMBER, value=float(min(values)))  # type: ignore[type-var]
        case "MAX":
            return AggregateValue(kind=AggregateKind.NUMBER, value=float(max(values)))  # type: ignore[type-var]
        case "SUM":
            return AggregateValue(kind=AggregateKind.NUMBER, value=math.fsum(values))  # type: ignore[arg-type]
        case "MEAN":
            return AggregateValue(kind=AggregateKind.NUMBER, value=statistics.fmean(values))  # type: ignore[arg-type]
        case "MEDIAN":
            median = statistics.median(values)  # type: ignore[type-var]
            return AggregateValue(kind=AggregateKind.NUMBER, value=float(median))
        case "MODE":
            return AggregateValue(kind=AggregateKind.NUMBER, value=float(_mode(values)))
        case "TOP_OCCURRENCES":
            counts = Counter(str(v) for v in values)
            ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
            return TopOccurrences(
                occurrences=tuple(
                    Occurrence(value=v, count=c) for v, c in ranked[: limit or 5]
                )
            )
        case "TOTAL_TRUE":
            return AggregateValue(kind=AggregateKind.COUNT, value=sum(v is True for v in values))
        case "TOTAL_FALSE":
            return AggregateValue(kind=AggregateKind.COUNT, value=sum(v is False for v in values))
        case "PERCENTAGE_TRUE" | "PERCENTAGE_FALSE":
            wanted = metric == "PERCENTAGE_TRUE"
            hits = sum(v is wanted for v in values)
            share = 100.0 * hits / len(values) if values else 0.0
            return AggregateValue(kind=AggregateKind.PERCENTAGE, value=share)
    raise ValueError(f"Unsupported metric {metric!r}")  # pragma: no cover


class CollectionStore:
    """Immutable rows of one collection with their search index."""

    def __init__(
        self,
        schema: CollectionSchema,
        rows: Sequence[Mapping[str, object]],
        config: SearchConfiguration,
    ) -> None:
        """Check and index the rows.

        Args:
            schema (CollectionSchema): collection schema.
            rows (Sequence[Mapping[str, object]]): seeded rows.
            config (SearchConfiguration): ranking parameters.

        Raises:
            RowViolation: if a row does not conform to the schema.
        """
        self.schema = schema
        self.rows: tuple[Row, ...] = tuple(check_rows(schema, rows))
        searchable = schema.searchable_property
        texts = (str(row[searchable.name]) for row in self.rows) if searchable else ()
        self.index = InvertedIndex(texts, config)


class QueryEngine:
    """Executes validated queries over the collections of one use case."""

    def __init__(
        self,
        use_case: UseCase,
        data: Mapping[str, Sequence[Mapping[str, object]]],
        config: EngineConfiguration | None = None,
    ) -> None:
        """Load the collections.

        Args:
            use_case (UseCase): use case the data belongs to.
            data (Mapping[str, Sequence[Mapping[str, object]]]): rows per collection.
            config (EngineConfiguration | None, optional): engine configuration.

        Raises:
            RowViolation: if rows do not conform or a collection has no data.
        """
        self.use_case = use_case
        self.config = config or EngineConfiguration()
        self._stores: dict[str, CollectionStore] = {}
        for collection in use_case.collections:
            if collection.name not in data:
                raise RowViolation(f"No rows given for collection '{collection.name}'")
            self._stores[collection.name] = CollectionStore(
                collection, data[collection.name], self.config.search
            )

    def rows(self, collection: str) -> tuple[Row, ...]:
        """Returns the rows of a collection."""
        return self._stores[collection].rows

    def execute(self, validated: ValidatedQuery) -> ResultSet:
        """Runs filter, search ranking, aggregation and grouping in that order.

        Args:
            validated (ValidatedQuery): query bound to its collection.

        Raises:
            MultipleAggregationsPresent: if several aggregation slots are filled.
            EmptyAggregate: if an undefined metric runs over zero rows.

        Returns:
            ResultSet: the result.
        """
        query = validated.query
        store = self._stores[validated.collection.name]
        aggregations = query.aggregations
        if len(aggregations) > 1:
            raise MultipleAggregationsPresent(
                f"Query on '{query.collection_name}' has {len(aggregations)} aggregations"
            )

        positions = [
            i
            for i, row in enumerate(store.rows)
            if all(eval_filter(row, f) for f in query.filters)
        ]
        if query.search_query is not None:
            positions = store.index.rank(query.search_query, positions)

        selected = [store.rows[i] for i in positions]
        aggregation = aggregations[0] if aggregations else None

        if query.groupby_property is None:
            return self._summarize(selected, aggregation, store.schema)

        partitions: dict[Value, list[Row]] = defaultdict(list)
        for row in selected:
            partitions[row[query.groupby_property]].append(row)
        groups = tuple(
            Group(key=key, result=self._summarize(partitions[key], aggregation, store.schema))
            for key in sorted(partitions)  # type: ignore[type-var]
        )
        return GroupedResult(property_name=query.groupby_property, groups=groups)

    def _summarize(
        self,
        rows: list[Row],
        aggregation: Aggregation | None,
        schema: CollectionSchema,
    ) -> ObjectResults | AggregateValue | TopOccurrences:
        if aggregation is None:
            return ObjectResults(rows=tuple(rows))

        prop = schema.get_property(aggregation.property_name)
        data_type = prop.data_type if prop else DataType.TEXT
        limit = self.config.top_occurrences_limit
        if isinstance(aggregation, TextAggregation) and aggregation.top_occurrences_limit:
            limit = aggregation.top_occurrences_limit
        values = [row[aggregation.property_name] for row in rows]
        return aggregate(values, aggregation.metric, data_type, limit)


def execute(
    validated: ValidatedQuery,
    data: Mapping[str, Sequence[Mapping[str, object]]],
    use_case: UseCase,
    config: EngineConfiguration | None = None,
) -> ResultSet:
    """Executes one query over freshly loaded data.

    Args:
        validated (ValidatedQuery): query bound to its collection.
        data (Mapping[str, Sequence[Mapping[str, object]]]): rows per collection.
        use_case (UseCase): use case the data belongs to.
        config (EngineConfiguration | None, optional): engine configuration.

    Returns:
        ResultSet: the result.
    """
    return QueryEngine(use_case, data, config).execute(validated)
