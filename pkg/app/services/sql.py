"""Compilation of non-search queries to ANSI SQL."""

from enum import StrEnum

from app.model import (
    Aggregation,
    BooleanOperator,
    BooleanPropertyFilter,
    IntPropertyFilter,
    PropertyFilter,
    QueryRequest,
    TextAggregation,
    TextPropertyFilter,
)
from app.services.queries import MultipleAggregationsPresent, ValidatedQuery
from app.utils.text import format_number

DEFAULT_TOP_OCCURRENCES = 5


class SqlDialect(StrEnum):
    """Supported SQL dialects."""

    ANSI = "ANSI"


class SqlCompileError(Exception):
    """Base error of SQL compilation."""


class SearchNotCompilable(SqlCompileError):
    """Raised for queries carrying a search query."""


class UnsupportedMetricForDialect(SqlCompileError):
    """Raised for metrics the dialect cannot express."""


_SIMPLE_AGGREGATES = {
    "COUNT": "COUNT({p})",
    "MIN": "MIN({p})",
    "MAX": "MAX({p})",
    "MEAN": "AVG({p})",
    "SUM": "COALESCE(SUM({p}), 0)",
    "TOTAL_TRUE": "COALESCE(SUM(CASE WHEN {p} THEN 1 ELSE 0 END), 0)",
    "TOTAL_FALSE": "COALESCE(SUM(CASE WHEN {p} THEN 0 ELSE 1 END), 0)",
    "PERCENTAGE_TRUE": "COALESCE(100.0 * AVG(CASE WHEN {p} THEN 1 ELSE 0 END), 0)",
    "PERCENTAGE_FALSE": "COALESCE(100.0 * AVG(CASE WHEN {p} THEN 0 ELSE 1 END), 0)",
}


def quote_text(value: str) -> str:
    """Returns a single-quoted SQL text literal."""
    return "'" + value.replace("'", "''") + "'"


def _condition(property_filter: PropertyFilter) -> str:
    p = property_filter.property_name
    match property_filter:
        case IntPropertyFilter(operator=op, value=value):
            return f"{p} {op} {format_number(value)}"
        case TextPropertyFilter(operator=op, value=value):
            return f"{p} {op} {quote_text(value)}"
        case BooleanPropertyFilter(operator=op, value=value):
            symbol = "<>" if op == BooleanOperator.NE else "="
            return f"{p} {symbol} {'TRUE' if value else 'FALSE'}"
    raise TypeError(f"Unsupported filter {property_filter!r}")  # pragma: no cover


def _where(query: QueryRequest) -> str:
    conditions = [_condition(f) for f in query.filters]
    return f" WHERE {' AND '.join(conditions)}" if conditions else ""


def _columns(*names: str | None) -> list[str]:
    seen: list[str] = []
    for name in names:
        if name is not None and name not in seen:
            seen.append(name)
    return seen


def _filtered(query: QueryRequest, columns: list[str]) -> str:
    return (
        f"filtered AS (SELECT {', '.join(columns)} "
        f"FROM {query.collection_name}{_where(query)})"
    )


def _median(query: QueryRequest, p: str, g: str | None) -> str:
    columns = _columns(g, p)
    partition = f"PARTITION BY {g} " if g else ""
    ranked = (
        f"ranked AS (SELECT {', '.join(columns)}, "
        f"ROW_NUMBER() OVER ({partition}ORDER BY {p}) AS rn, "
        f"COUNT(*) OVER ({'PARTITION BY ' + g if g else ''}) AS cnt FROM filtered)"
    )
    select = f"SELECT {g}, AVG({p})" if g else f"SELECT AVG({p})"
    tail = f" GROUP BY {g} ORDER BY {g}" if g else ""
    return (
        f"WITH {_filtered(query, columns)}, {ranked} "
        f"{select} FROM ranked WHERE rn IN ((cnt + 1) / 2, (cnt + 2) / 2){tail}"
    )


def _ranked_counts(query: QueryRequest, p: str, g: str | None) -> str:
    columns = _columns(g, p)
    keys = ", ".join(columns)
    partition = f"PARTITION BY {g} " if g else ""
    return (
        f"WITH {_filtered(query, columns)}, "
        f"counted AS (SELECT {keys}, COUNT(*) AS freq FROM filtered GROUP BY {keys}), "
        f"ranked AS (SELECT {keys}, freq, "
        f"ROW_NUMBER() OVER ({partition}ORDER BY freq DESC, {p} ASC) AS rn FROM counted)"
    )


def _mode(query: QueryRequest, p: str, g: str | None) -> str:
    select = f"SELECT {g}, {p}" if g else f"SELECT {p}"
    tail = f" ORDER BY {g}" if g else ""
    return f"{_ranked_counts(query, p, g)} {select} FROM ranked WHERE rn = 1{tail}"


def _top_occurrences(query: QueryRequest, p: str, g: str | None, limit: int) -> str:
    select = f"SELECT {g}, {p}, freq" if g else f"SELECT {p}, freq"
    order = f"{g}, rn" if g else "rn"
    return (
        f"{_ranked_counts(query, p, g)} {select} FROM ranked "
        f"WHERE rn <= {limit} ORDER BY {order}"
    )


def _aggregate(query: QueryRequest, aggregation: Aggregation, default_limit: int) -> str:
    p = aggregation.property_name
    g = query.groupby_property
    metric = aggregation.metric.value

    if metric == "TYPE":
        raise UnsupportedMetricForDialect(
            f"TYPE on '{query.collection_name}.{p}' has no SQL counterpart"
        )
    if metric == "MEDIAN":
        return _median(query, p, g)
    if metric == "MODE":
        return _mode(query, p, g)
    if metric == "TOP_OCCURRENCES":
        limit = default_limit
        if isinstance(aggregation, TextAggregation) and aggregation.top_occurrences_limit:
            limit = aggregation.top_occurrences_limit
        return _top_occurrences(query, p, g, limit)

    expression = _SIMPLE_AGGREGATES[metric].format(p=p)
    if g is None:
        return f"SELECT {expression} FROM {query.collection_name}{_where(query)}"
    return (
        f"SELECT {g}, {expression} FROM {query.collection_name}{_where(query)} "
        f"GROUP BY {g} ORDER BY {g}"
    )


def compile_to_sql(
    validated: ValidatedQuery,
    dialect: SqlDialect = SqlDialect.ANSI,
    top_occurrences_limit: int = DEFAULT_TOP_OCCURRENCES,
) -> str:
    """Compiles a query into a single SELECT statement.

    Args:
        validated (ValidatedQuery): query bound to its collection.
        dialect (SqlDialect, optional): target dialect. Defaults to ANSI.
        top_occurrences_limit (int, optional): default number of occurrences.

    Raises:
        SearchNotCompilable: if the query carries a search query.
        UnsupportedMetricForDialect: for the TYPE metric.
        MultipleAggregationsPresent: if several aggregation slots are filled.

    Returns:
        str: the statement, without a trailing semicolon.
    """
    query = validated.query
    if query.search_query is not None:
        raise SearchNotCompilable(
            f"Query on '{query.collection_name}' uses search, which SQL cannot express"
        )
    aggregations = query.aggregations
    if len(aggregations) > 1:
        raise MultipleAggregationsPresent(
            f"Query on '{query.collection_name}' has {len(aggregations)} aggregations"
        )

    if aggregations:
        return _aggregate(query, aggregations[0], top_occurrences_limit)

    statement = f"SELECT * FROM {query.collection_name}{_where(query)}"
    if query.groupby_property is not None:
        statement += f" ORDER BY {query.groupby_property}"
    return statement

