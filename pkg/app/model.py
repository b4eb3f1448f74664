"""Module that contains all data models for the querybench application."""

from enum import StrEnum
from typing import Any, ClassVar, Self

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveInt,
    model_validator,
)

IDENTIFIER_PATTERN = r"^[A-Za-z_][A-Za-z0-9_]*$"


class DataType(StrEnum):
    """The data type of a collection property."""

    TEXT = "TEXT"
    NUMBER = "NUMBER"
    BOOLEAN = "BOOLEAN"


class PropertySchema(BaseModel):
    """A typed property of a collection."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(pattern=IDENTIFIER_PATTERN)
    data_type: DataType
    description: str = ""
    searchable: bool = False


class CollectionSchema(BaseModel):
    """A named collection with an ordered list of properties."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(pattern=IDENTIFIER_PATTERN)
    properties: tuple[PropertySchema, ...]

    def get_property(self, name: str) -> PropertySchema | None:
        """Returns the property with the given name, if declared."""
        return next((p for p in self.properties if p.name == name), None)

    def properties_of(self, data_type: DataType) -> list[PropertySchema]:
        """Returns all properties of a data type in declaration order."""
        return [p for p in self.properties if p.data_type == data_type]

    @property
    def searchable_property(self) -> PropertySchema | None:
        """Returns the property holding rich searchable content."""
        return next((p for p in self.properties if p.searchable), None)


class UseCase(BaseModel):
    """A business domain made of related collections."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    use_case_overview: str
    collections: tuple[CollectionSchema, ...]

    def get_collection(self, name: str) -> CollectionSchema | None:
        """Returns the collection with the given name, if declared."""
        return next((c for c in self.collections if c.name == name), None)


class OperandKind(StrEnum):
    """The property kind an operator slot works on."""

    NONE = "none"
    INT = "int"
    TEXT = "text"
    BOOL = "bool"


OPERAND_KINDS: tuple[OperandKind, ...] = (
    OperandKind.NONE,
    OperandKind.INT,
    OperandKind.TEXT,
    OperandKind.BOOL,
)

DATA_TYPE_BY_KIND: dict[OperandKind, DataType] = {
    OperandKind.INT: DataType.NUMBER,
    OperandKind.TEXT: DataType.TEXT,
    OperandKind.BOOL: DataType.BOOLEAN,
}


class NumericOperator(StrEnum):
    """Comparison operators of integer property filters."""

    EQ = "="
    LT = "<"
    GT = ">"
    LE = "<="
    GE = ">="


class TextOperator(StrEnum):
    """Operators of text property filters."""

    EQ = "="
    LIKE = "LIKE"


class BooleanOperator(StrEnum):
    """Operators of boolean property filters."""

    EQ = "="
    NE = "!="


class IntMetric(StrEnum):
    """Metrics of integer property aggregations."""

    COUNT = "COUNT"
    TYPE = "TYPE"
    MIN = "MIN"
    MAX = "MAX"
    MEAN = "MEAN"
    MEDIAN = "MEDIAN"
    MODE = "MODE"
    SUM = "SUM"


class TextMetric(StrEnum):
    """Metrics of text property aggregations."""

    COUNT = "COUNT"
    TYPE = "TYPE"
    TOP_OCCURRENCES = "TOP_OCCURRENCES"


class BooleanMetric(StrEnum):
    """Metrics of boolean property aggregations."""

    COUNT = "COUNT"
    TYPE = "TYPE"
    TOTAL_TRUE = "TOTAL_TRUE"
    TOTAL_FALSE = "TOTAL_FALSE"
    PERCENTAGE_TRUE = "PERCENTAGE_TRUE"
    PERCENTAGE_FALSE = "PERCENTAGE_FALSE"


class IntPropertyFilter(BaseModel):
    """Filter on a numeric property."""

    model_config = ConfigDict(frozen=True, extra="forbid")
    kind: ClassVar[OperandKind] = OperandKind.INT

    property_name: str
    operator: NumericOperator
    value: float = Field(allow_inf_nan=False)


class TextPropertyFilter(BaseModel):
    """Filter on a text property."""

    model_config = ConfigDict(frozen=True, extra="forbid")
    kind: ClassVar[OperandKind] = OperandKind.TEXT

    property_name: str
    operator: TextOperator
    value: str


class BooleanPropertyFilter(BaseModel):
    """Filter on a boolean property."""

    model_config = ConfigDict(frozen=True, extra="forbid")
    kind: ClassVar[OperandKind] = OperandKind.BOOL

    property_name: str
    operator: BooleanOperator
    value: bool


_AGGREGATION_CONFIG = ConfigDict(
    frozen=True,
    extra="forbid",
    validate_by_name=True,
    validate_by_alias=True,
    serialize_by_alias=True,
)


class IntAggregation(BaseModel):
    """Aggregation over a numeric property."""

    model_config = _AGGREGATION_CONFIG
    kind: ClassVar[OperandKind] = OperandKind.INT

    property_name: str
    metric: IntMetric = Field(alias="metrics")


class TextAggregation(BaseModel):
    """Aggregation over a text property."""

    model_config = _AGGREGATION_CONFIG
    kind: ClassVar[OperandKind] = OperandKind.TEXT

    property_name: str
    metric: TextMetric = Field(alias="metrics")
    top_occurrences_limit: PositiveInt | None = None

    @model_validator(mode="after")
    def validate_limit(self) -> Self:
        """Validates that a limit only accompanies TOP_OCCURRENCES.

        Raises:
            ValueError: if a limit is set for another metric.

        Returns:
            Self: validated aggregation.
        """
        if (
            self.top_occurrences_limit is not None
            and self.metric != TextMetric.TOP_OCCURRENCES
        ):
            raise ValueError(
                f"top_occurrences_limit={self.top_occurrences_limit} is only valid "
                f"with metric TOP_OCCURRENCES, got {self.metric}"
            )
        return self


class BooleanAggregation(BaseModel):
    """Aggregation over a boolean property."""

    model_config = _AGGREGATION_CONFIG
    kind: ClassVar[OperandKind] = OperandKind.BOOL

    property_name: str
    metric: BooleanMetric = Field(alias="metrics")


type PropertyFilter = IntPropertyFilter | TextPropertyFilter | BooleanPropertyFilter
type Aggregation = IntAggregation | TextAggregation | BooleanAggregation


class QueryRequest(BaseModel):
    """The unified query: a collection plus optional operator arguments."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    collection_name: str
    search_query: str | None = None
    integer_property_filter: IntPropertyFilter | None = None
    text_property_filter: TextPropertyFilter | None = None
    boolean_property_filter: BooleanPropertyFilter | None = None
    integer_property_aggregation: IntAggregation | None = None
    text_property_aggregation: TextAggregation | None = None
    boolean_property_aggregation: BooleanAggregation | None = None
    groupby_property: str | None = None

    @property
    def filters(self) -> list[PropertyFilter]:
        """Returns the present filter slots in declaration order."""
        slots: list[PropertyFilter | None] = [
            self.integer_property_filter,
            self.text_property_filter,
            self.boolean_property_filter,
        ]
        return [f for f in slots if f is not None]

    @property
    def aggregations(self) -> list[Aggregation]:
        """Returns the present aggregation slots in declaration order."""
        slots: list[Aggregation | None] = [
            self.integer_property_aggregation,
            self.text_property_aggregation,
            self.boolean_property_aggregation,
        ]
        return [a for a in slots if a is not None]

    @property
    def optional_argument_count(self) -> int:
        """Returns how many optional arguments are present."""
        present = len(self.filters) + len(self.aggregations)
        present += self.search_query is not None
        present += self.groupby_property is not None
        return present

    def to_arguments(self) -> dict[str, Any]:
        """Serializes the query with absent arguments omitted.

        Returns:
            dict[str, Any]: tool-call arguments keyed by parameter name.
        """
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)


class ComplexityBucket(StrEnum):
    """Query complexity by number of optional arguments."""

    SIMPLE = "SIMPLE"
    MODERATE = "MODERATE"
    COMPLEX = "COMPLEX"


class CombinationId(BaseModel):
    """An operator combination: which argument categories a query uses."""

    model_config = ConfigDict(frozen=True)

    search: bool
    filter_kind: OperandKind
    aggregation_kind: OperandKind
    groupby: bool

    @model_validator(mode="after")
    def validate_not_empty(self) -> Self:
        """Rejects the combination without any optional argument.

        Raises:
            ValueError: if no category is active.

        Returns:
            Self: validated combination.
        """
        if self.argument_count == 0:
            raise ValueError("The combination without any operator is not valid")
        return self

    def __str__(self) -> str:  # pragma: no cover
        """Returns the string-representation."""
        return (
            f"({int(self.search)},{self.filter_kind},"
            f"{self.aggregation_kind},{int(self.groupby)})"
        )

    @property
    def argument_count(self) -> int:
        """Returns the number of active argument categories."""
        return (
            int(self.search)
            + (self.filter_kind != OperandKind.NONE)
            + (self.aggregation_kind != OperandKind.NONE)
            + int(self.groupby)
        )

    def sort_key(self) -> tuple[int, int, int, int]:
        """Returns the lexicographic ordering key of the combination."""
        return (
            int(self.search),
            OPERAND_KINDS.index(self.filter_kind),
            OPERAND_KINDS.index(self.aggregation_kind),
            int(self.groupby),
        )


class DatasetRecord(BaseModel):
    """A natural-language command paired with its ground-truth query."""

    model_config = ConfigDict(frozen=True)

    record_id: str = Field(min_length=1)
    nl_command: str = Field(min_length=1)
    ground_truth_query: QueryRequest
    schema_ref: str
    combination: CombinationId


class GenerationVerdict(BaseModel):
    """The outcome of reviewing a generated command."""

    model_config = ConfigDict(frozen=True)

    record_id: str = ""
    approved: bool
    critique: str = ""
    corrected_command: str | None = None

    @model_validator(mode="after")
    def validate_critique(self) -> Self:
        """Validates that a rejection always explains itself.

        Raises:
            ValueError: if a rejected verdict carries no critique.

        Returns:
            Self: validated verdict.
        """
        if not self.approved and not self.critique.strip():
            raise ValueError(
                f"Rejected verdict for record '{self.record_id}' needs a critique"
            )
        return self


class OutcomeKind(StrEnum):
    """How a model answered a benchmark command."""

    TOOL_CALL = "TOOL_CALL"
    NO_TOOL = "NO_TOOL"
    MALFORMED = "MALFORMED"


class TokenUsage(BaseModel):
    """Token counts reported by a provider."""

    model_config = ConfigDict(frozen=True)

    input_tokens: NonNegativeInt = 0
    output_tokens: NonNegativeInt = 0

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        """Returns the sum of two usages."""
        return TokenUsage(
            input_tokens=self.input_tokens + other.input_tokens,
            output_tokens=self.output_tokens + other.output_tokens,
        )


class PredictionOutcome(BaseModel):
    """One model's answer to one dataset record."""

    model_config = ConfigDict(frozen=True)

    record_id: str
    model: str
    kind: OutcomeKind
    queries: tuple[QueryRequest, ...] = ()
    response_text: str | None = None
    raw_payload: dict[str, Any] | None = None
    diagnostics: tuple[str, ...] = ()
    rationale: str | None = None
    usage: TokenUsage = TokenUsage()
    latency_ms: NonNegativeFloat = 0.0

    @model_validator(mode="after")
    def validate_queries(self) -> Self:
        """Validates that tool-call outcomes carry parsed queries.

        Raises:
            ValueError: on a tool-call outcome without queries.

        Returns:
            Self: validated outcome.
        """
        if self.kind == OutcomeKind.TOOL_CALL and not self.queries:
            raise ValueError(
                f"Tool-call outcome for record '{self.record_id}' of model "
                f"'{self.model}' has no parsed queries"
            )
        return self
