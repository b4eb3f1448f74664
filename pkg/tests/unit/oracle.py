"""Independent brute-force evaluation of queries for result comparisons."""

import math
import re
from collections import Counter
from typing import Any

from app.model import (
    BooleanPropertyFilter,
    CollectionSchema,
    DataType,
    IntPropertyFilter,
    QueryRequest,
    TextAggregation,
    TextPropertyFilter,
    UseCase,
)
from app.services.engine import (
    AggregateValue,
    GroupedResult,
    ObjectResults,
    ResultSet,
    TopOccurrences,
)

EMPTY = ("empty",)

type Row = dict[str, Any]
type Normalized = tuple[Any, ...]


def like(value: str, pattern: str) -> bool:
    """Matches a LIKE pattern by scanning it as a regular expression."""
    regex = "".join(
        ".*" if c == "%" else "." if c == "_" else re.escape(c) for c in pattern
    )
    return re.fullmatch(regex, value, re.DOTALL) is not None


def passes(row: Row, property_filter: Any) -> bool:
    """Returns True if a row satisfies a filter."""
    value = row[property_filter.property_name]
    match property_filter:
        case IntPropertyFilter():
            bound = property_filter.value
            return {
                "=": value == bound,
                "<": value < bound,
                ">": value > bound,
                "<=": value <= bound,
                ">=": value >= bound,
            }[property_filter.operator.value]
        case TextPropertyFilter():
            if property_filter.operator.value == "LIKE":
                return like(value, property_filter.value)
            return bool(value == property_filter.value)
        case BooleanPropertyFilter():
            if property_filter.operator.value == "!=":
                return bool(value != property_filter.value)
            return bool(value == property_filter.value)
    raise AssertionError(property_filter)


def summarize(
    rows: list[Row], query: QueryRequest, collection: CollectionSchema
) -> Normalized:
    """Aggregates rows the way the query asks, or lists them."""
    if not query.aggregations:
        return ("rows", [dict(r) for r in rows])

    aggregation = query.aggregations[0]
    values = [r[aggregation.property_name] for r in rows]
    metric = aggregation.metric.value
    if metric in ("MIN", "MAX", "MEAN", "MEDIAN", "MODE") and not values:
        return EMPTY

    if metric == "COUNT":
        return ("value", len(values))
    if metric == "TYPE":
        prop = collection.get_property(aggregation.property_name)
        assert prop is not None
        return ("value", prop.data_type.value)
    if metric == "MIN":
        return ("value", min(values))
    if metric == "MAX":
        return ("value", max(values))
    if metric == "SUM":
        return ("value", sum(values))
    if metric == "MEAN":
        return ("value", sum(values) / len(values))
    if metric == "MEDIAN":
        ordered = sorted(values)
        middle = len(ordered) // 2
        if len(ordered) % 2:
            return ("value", ordered[middle])
        return ("value", (ordered[middle - 1] + ordered[middle]) / 2)
    if metric == "MODE":
        counts = Counter(values)
        best = max(counts.values())
        return ("value", min(v for v, c in counts.items() if c == best))
    if metric == "TOP_OCCURRENCES":
        assert isinstance(aggregation, TextAggregation)
        limit = aggregation.top_occurrences_limit or 5
        ranked = sorted(Counter(values).items(), key=lambda item: (-item[1], item[0]))
        return ("top", ranked[:limit])

    trues = sum(1 for v in values if v is True)
    falses = len(values) - trues
    if metric == "TOTAL_TRUE":
        return ("value", trues)
    if metric == "TOTAL_FALSE":
        return ("value", falses)
    hits = trues if metric == "PERCENTAGE_TRUE" else falses
    return ("value", 100 * hits / len(values) if values else 0)


def brute_force(query: QueryRequest, use_case: UseCase, data: dict[str, list[Row]]) -> Normalized:
    """Evaluates a query without search by scanning every row."""
    collection = use_case.get_collection(query.collection_name)
    assert collection is not None
    rows = [r for r in data[collection.name] if all(passes(r, f) for f in query.filters)]
    g = query.groupby_property
    if g is None:
        return summarize(rows, query, collection)
    keys = sorted({r[g] for r in rows})
    return (
        "groups",
        [(k, summarize([r for r in rows if r[g] == k], query, collection)) for k in keys],
    )


def normalize(result: ResultSet) -> Normalized:
    """Turns an engine result into the shape produced by brute_force."""
    match result:
        case ObjectResults():
            return ("rows", [dict(r) for r in result.rows])
        case AggregateValue():
            return ("value", result.value)
        case TopOccurrences():
            return ("top", [(o.value, o.count) for o in result.occurrences])
        case GroupedResult():
            return ("groups", [(g.key, normalize(g.result)) for g in result.groups])
    raise AssertionError(result)


def from_sql(
    query: QueryRequest, collection: CollectionSchema, fetched: list[tuple[Any, ...]]
) -> Normalized:
    """Turns SQL result rows into the shape produced by brute_force."""

    def cast(name: str, value: Any) -> Any:
        prop = collection.get_property(name)
        assert prop is not None
        if prop.data_type == DataType.BOOLEAN:
            return bool(value)
        if prop.data_type == DataType.NUMBER:
            return float(value)
        return value

    g = query.groupby_property
    if not query.aggregations:
        objects = [
            {p.name: cast(p.name, v) for p, v in zip(collection.properties, row, strict=True)}
            for row in fetched
        ]
        if g is None:
            return ("rows", objects)
        grouped: dict[Any, list[Row]] = {}
        for o in objects:
            grouped.setdefault(o[g], []).append(o)
        return ("groups", [(k, ("rows", v)) for k, v in grouped.items()])

    metric = query.aggregations[0].metric.value

    def scalar(rows: list[tuple[Any, ...]]) -> Normalized:
        if metric == "TOP_OCCURRENCES":
            return ("top", [(r[0], r[1]) for r in rows])
        if not rows or rows[0][0] is None:
            return EMPTY
        return ("value", rows[0][0])

    if g is None:
        return scalar(fetched)
    by_key: dict[Any, list[tuple[Any, ...]]] = {}
    for row in fetched:
        by_key.setdefault(cast(g, row[0]), []).append(row[1:])
    return ("groups", [(k, scalar(v)) for k, v in by_key.items()])


def unordered_groups(result: Normalized) -> Normalized:
    """Sorts the rows inside each group of a grouped row listing."""
    if result[0] != "groups":
        return result
    return (
        "groups",
        [
            (k, ("rows", sorted(v[1], key=repr)) if v[0] == "rows" else v)
            for k, v in result[1]
        ],
    )


def assert_same(actual: Any, expected: Any, path: str = "result") -> None:
    """Compares nested results, floats within 1e-9."""
    if isinstance(expected, bool) or isinstance(actual, bool):
        assert actual == expected, f"{path}: {actual!r} != {expected!r}"
    elif isinstance(expected, int | float) and isinstance(actual, int | float):
        assert math.isclose(actual, expected, rel_tol=0, abs_tol=1e-9), (
            f"{path}: {actual!r} != {expected!r}"
        )
    elif isinstance(expected, list | tuple):
        assert isinstance(actual, list | tuple), f"{path}: {actual!r} != {expected!r}"
        assert len(actual) == len(expected), f"{path}: {actual!r} != {expected!r}"
        for i, (a, e) in enumerate(zip(actual, expected, strict=True)):
            assert_same(a, e, f"{path}[{i}]")
    else:
        assert actual == expected, f"{path}: {actual!r} != {expected!r}"
