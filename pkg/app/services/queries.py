"""Validation, canonicalization and classification of unified queries."""

from pydantic import BaseModel, ConfigDict

from app.model import (
    DATA_TYPE_BY_KIND,
    CollectionSchema,
    CombinationId,
    ComplexityBucket,
    OperandKind,
    QueryRequest,
    UseCase,
)
from app.utils.text import collapse_whitespace


class QueryError(Exception):
    """Base error of query handling."""


class UnknownCollection(QueryError):
    """Raised when a query targets a collection the use case does not declare."""

    def __init__(self, collection: str, available: list[str]) -> None:
        """Initialize the error.

        Args:
            collection (str): requested collection.
            available (list[str]): declared collections.
        """
        super().__init__(
            f"Unknown collection '{collection}', expected one of {', '.join(available)}"
        )
        self.collection = collection


class UnknownProperty(QueryError):
    """Raised when a query references an undeclared property."""

    def __init__(self, collection: str, property_name: str) -> None:
        """Initialize the error.

        Args:
            collection (str): queried collection.
            property_name (str): referenced property.
        """
        super().__init__(f"Unknown property '{property_name}' in '{collection}'")
        self.collection = collection
        self.property_name = property_name


class TypeMismatch(QueryError):
    """Raised when an argument is used on a property of another data type."""

    def __init__(self, property_name: str, expected: str, actual: str) -> None:
        """Initialize the error.

        Args:
            property_name (str): referenced property.
            expected (str): data type the argument works on.
            actual (str): declared data type of the property.
        """
        super().__init__(
            f"Property '{property_name}' is {actual}, the argument expects {expected}"
        )
        self.property_name = property_name
        self.expected = expected
        self.actual = actual


class QueryValidationError(QueryError):
    """Carries every problem found while validating a query."""

    def __init__(self, errors: list[QueryError]) -> None:
        """Initialize the error.

        Args:
            errors (list[QueryError]): all collected problems.
        """
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


class DegenerateQuery(QueryError):
    """Raised when a query carries no optional argument."""


class MultipleFiltersPresent(QueryError):
    """Raised when a query fills more than one filter slot."""


class MultipleAggregationsPresent(QueryError):
    """Raised when a query fills more than one aggregation slot."""


class ValidatedQuery(BaseModel):
    """A query proven consistent with its collection schema."""

    model_config = ConfigDict(frozen=True)

    query: QueryRequest
    collection: CollectionSchema


def validate(query: QueryRequest, use_case: UseCase) -> ValidatedQuery:
    """Checks that a query only references what the use case declares.

    Args:
        query (QueryRequest): query to check.
        use_case (UseCase): use case the query runs against.

    Raises:
        QueryValidationError: with every problem found.

    Returns:
        ValidatedQuery: the query bound to its collection.
    """
    collection = use_case.get_collection(query.collection_name)
    if collection is None:
        available = [c.name for c in use_case.collections]
        raise QueryValidationError(
            [UnknownCollection(query.collection_name, available)]
        )

    errors: list[QueryError] = []
    for slot in (*query.filters, *query.aggregations):
        prop = collection.get_property(slot.property_name)
        if prop is None:
            errors.append(UnknownProperty(collection.name, slot.property_name))
            continue
        expected = DATA_TYPE_BY_KIND[slot.kind]
        if prop.data_type != expected:
            errors.append(TypeMismatch(prop.name, expected, prop.data_type))

    if query.groupby_property is not None:
        if collection.get_property(query.groupby_property) is None:
            errors.append(UnknownProperty(collection.name, query.groupby_property))

    if errors:
        raise QueryValidationError(errors)
    return ValidatedQuery(query=query, collection=collection)


def canonicalize(query: QueryRequest, strict: bool = False) -> QueryRequest:
    """Normalizes the free-text fields of a query.

    The search query is case-folded with whitespace collapsed, the text
    filter value is trimmed. Everything else is kept as is.

    Args:
        query (QueryRequest): query to normalize.
        strict (bool, optional): return the query untouched. Defaults to False.

    Returns:
        QueryRequest: normalized query.
    """
    if strict:
        return query

    update: dict[str, object] = {}
    if query.search_query is not None:
        update["search_query"] = collapse_whitespace(query.search_query.casefold())
    if query.text_property_filter is not None:
        text_filter = query.text_property_filter
        update["text_property_filter"] = text_filter.model_copy(
            update={"value": text_filter.value.strip()}
        )
    return query.model_copy(update=update) if update else query


def bucket_for(argument_count: int) -> ComplexityBucket:
    """Maps a number of optional arguments to its complexity bucket.

    Raises:
        DegenerateQuery: for zero arguments.
    """
    if argument_count <= 0:
        raise DegenerateQuery("A query without optional arguments has no complexity")
    if argument_count == 1:
        return ComplexityBucket.SIMPLE
    if argument_count == 2:
        return ComplexityBucket.MODERATE
    return ComplexityBucket.COMPLEX


def complexity(query: QueryRequest) -> ComplexityBucket:
    """Classifies a query by its number of optional arguments.

    Args:
        query (QueryRequest): query to classify.

    Raises:
        DegenerateQuery: if the query carries only a collection name.

    Returns:
        ComplexityBucket: SIMPLE, MODERATE or COMPLEX.
    """
    try:
        return bucket_for(query.optional_argument_count)
    except DegenerateQuery as e:
        raise DegenerateQuery(
            f"Query on '{query.collection_name}' has no optional arguments"
        ) from e


def operator_signature(query: QueryRequest) -> CombinationId:
    """Returns the operator combination a query uses.

    Args:
        query (QueryRequest): query with at most one filter and one aggregation.

    Raises:
        MultipleFiltersPresent: if several filter slots are filled.
        MultipleAggregationsPresent: if several aggregation slots are filled.
        DegenerateQuery: if no optional argument is present.

    Returns:
        CombinationId: the combination.
    """
    filters = query.filters
    aggregations = query.aggregations
    if len(filters) > 1:
        kinds = ", ".join(f.kind for f in filters)
        raise MultipleFiltersPresent(
            f"Query on '{query.collection_name}' has several filters: {kinds}"
        )
    if len(aggregations) > 1:
        kinds = ", ".join(a.kind for a in aggregations)
        raise MultipleAggregationsPresent(
            f"Query on '{query.collection_name}' has several aggregations: {kinds}"
        )
    if query.optional_argument_count == 0:
        raise DegenerateQuery(
            f"Query on '{query.collection_name}' has no optional arguments"
        )

    return CombinationId(
        search=query.search_query is not None,
        filter_kind=filters[0].kind if filters else OperandKind.NONE,
        aggregation_kind=aggregations[0].kind if aggregations else OperandKind.NONE,
        groupby=query.groupby_property is not None,
    )
