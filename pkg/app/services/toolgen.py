"""Function-calling tool definitions and the structured-output schema."""

import copy
import json
from enum import StrEnum
from typing import Any, Self

import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.model import (
    BooleanMetric,
    BooleanOperator,
    IntMetric,
    NumericOperator,
    QueryRequest,
    TextMetric,
    TextOperator,
    UseCase,
)
from app.services.schema_registry import (
    TokenEstimator,
    collection_names,
    render_description,
)
from app.utils.text import estimate_tokens

logger = structlog.get_logger(__name__)

TOOL_NAME = "query_database"
PER_COLLECTION_PREFIX = "query_"
RATIONALE_PARAMETER = "rationale"

TOOL_DESCRIPTION = (
    "Query a database with an optional search query or optional filters or "
    "aggregations on the results.\n\n"
    "IMPORTANT! Please be mindful of the available query APIs you can use such as "
    "search queries, filters, aggregations, and groupby!\n\n"
    "Available collections in this database:\n{collections_description}"
)
PER_COLLECTION_DESCRIPTION = (
    "Query the {collection} collection with an optional search query or optional "
    "filters or aggregations on the results.\n\n"
    "IMPORTANT! Please be mindful of the available query APIs you can use such as "
    "search queries, filters, aggregations, and groupby!\n\n"
    "Collection schema:\n{collections_description}"
)
TOOL_RATIONALE_DESCRIPTION = "A rationale regarding whether tool calls are needed."


class ToolgenError(Exception):
    """Base error of tool generation and tool-call parsing."""


class AlreadyPresent(ToolgenError):
    """Raised when a tool already declares a parameter."""


class ToolCallParseError(ToolgenError):
    """Raised when a tool call cannot be mapped back to a query."""

    def __init__(self, function_name: str, diagnostics: list[str]) -> None:
        """Initialize the error.

        Args:
            function_name (str): called function.
            diagnostics (list[str]): what went wrong.
        """
        super().__init__(f"Cannot parse call to '{function_name}': {'; '.join(diagnostics)}")
        self.function_name = function_name
        self.diagnostics = diagnostics


class ToolMode(StrEnum):
    """How tools are offered to a model."""

    UNIFIED = "unified"
    PER_COLLECTION = "per-collection-tools"
    STRUCTURED = "structured"
    RATIONALE = "rationale"
    PARALLEL = "parallel"


class ToolDefinition(BaseModel):
    """A provider-neutral function definition."""

    model_config = ConfigDict(frozen=True)

    name: str
    description: str
    parameters: dict[str, Any]
    required: tuple[str, ...] = ()

    def to_schema(self) -> dict[str, Any]:
        """Returns the JSON schema of the parameters with the required list."""
        return {
            "type": "object",
            "properties": copy.deepcopy(self.parameters),
            "required": list(self.required),
        }

    def to_envelope(self) -> dict[str, Any]:
        """Returns the tool in the nested ``type``/``function`` envelope."""
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.to_schema(),
            },
        }

    def to_json(self) -> str:
        """Serializes the envelope deterministically."""
        return json.dumps(self.to_envelope(), ensure_ascii=False)

    def __str__(self) -> str:  # pragma: no cover
        """Returns the string-representation."""
        return f"ToolDefinition(name={self.name}, parameters={list(self.parameters)})"


def _string_enum(values: list[str]) -> dict[str, Any]:
    return {"type": "string", "enum": values}


def query_parameters(collections: list[str] | None) -> dict[str, Any]:
    """Returns the query parameters, optionally with the routing parameter.

    Args:
        collections (list[str] | None): routing enum, or None to omit
            ``collection_name``.

    Returns:
        dict[str, Any]: parameter schemas keyed by parameter name.
    """
    parameters: dict[str, Any] = {}
    if collections is not None:
        parameters["collection_name"] = {
            "type": "string",
            "description": "The collection to query.",
            "enum": list(collections),
        }
    parameters["search_query"] = {
        "type": "string",
        "description": "A search query to return objects from a search index.",
    }
    parameters["integer_property_filter"] = {
        "type": "object",
        "description": "Filter numeric properties using comparison operators.",
        "properties": {
            "property_name": {"type": "string"},
            "operator": _string_enum([o.value for o in NumericOperator]),
            "value": {"type": "number"},
        },
    }
    parameters["text_property_filter"] = {
        "type": "object",
        "description": "Filter text properties using equality or LIKE operators",
        "properties": {
            "property_name": {"type": "string"},
            "operator": _string_enum([o.value for o in TextOperator]),
            "value": {"type": "string"},
        },
    }
    parameters["boolean_property_filter"] = {
        "type": "object",
        "description": "Filter boolean properties using equality operators",
        "properties": {
            "property_name": {"type": "string"},
            "operator": _string_enum([o.value for o in BooleanOperator]),
            "value": {"type": "boolean"},
        },
    }
    parameters["integer_property_aggregation"] = {
        "type": "object",
        "description": "Aggregate numeric properties using statistical functions",
        "properties": {
            "property_name": {"type": "string"},
            "metrics": _string_enum([m.value for m in IntMetric]),
        },
    }
    parameters["text_property_aggregation"] = {
        "type": "object",
        "description": "Aggregate text properties using frequency analysis",
        "properties": {
            "property_name": {"type": "string"},
            "metrics": _string_enum([m.value for m in TextMetric]),
            "top_occurrences_limit": {"type": "integer"},
        },
    }
    parameters["boolean_property_aggregation"] = {
        "type": "object",
        "description": "Aggregate boolean properties using statistical functions",
        "properties": {
            "property_name": {"type": "string"},
            "metrics": _string_enum([m.value for m in BooleanMetric]),
        },
    }
    parameters["groupby_property"] = {
        "type": "string",
        "description": "Group the results by a property.",
    }
    return parameters


def build_unified_tool(
    use_case: UseCase,
    budget: int = 1024,
    estimator: TokenEstimator = estimate_tokens,
) -> ToolDefinition:
    """Builds the single ``query_database`` tool of a use case.

    Args:
        use_case (UseCase): use case to expose.
        budget (int, optional): token budget of the collections description.
        estimator (TokenEstimator, optional): token estimator.

    Raises:
        BudgetExceeded: if the description does not fit the budget.

    Returns:
        ToolDefinition: the unified tool.
    """
    description = render_description(use_case, budget, estimator)
    return ToolDefinition(
        name=TOOL_NAME,
        description=TOOL_DESCRIPTION.format(collections_description=description),
        parameters=query_parameters(collection_names(use_case)),
        required=("collection_name",),
    )


def per_collection_tool_name(collection: str) -> str:
    """Returns the tool name that routes to a collection."""
    return f"{PER_COLLECTION_PREFIX}{collection}"


def build_per_collection_tools(
    use_case: UseCase,
    budget: int = 1024,
    estimator: TokenEstimator = estimate_tokens,
) -> list[ToolDefinition]:
    """Builds one tool per collection; routing is implied by the tool chosen.

    Args:
        use_case (UseCase): use case to expose.
        budget (int, optional): token budget of each collection description.
        estimator (TokenEstimator, optional): token estimator.

    Raises:
        BudgetExceeded: if a description does not fit the budget.

    Returns:
        list[ToolDefinition]: tools in collection order.
    """
    tools: list[ToolDefinition] = []
    for collection in use_case.collections:
        scoped = use_case.model_copy(update={"collections": (collection,)})
        description = render_description(scoped, budget, estimator)
        tools.append(
            ToolDefinition(
                name=per_collection_tool_name(collection.name),
                description=PER_COLLECTION_DESCRIPTION.format(
                    collection=collection.name, collections_description=description
                ),
                parameters=query_parameters(None),
                required=(),
            )
        )
    return tools


def with_rationale(tool: ToolDefinition) -> ToolDefinition:
    """Adds a required ``rationale`` parameter to a tool.

    Args:
        tool (ToolDefinition): tool to extend.

    Raises:
        AlreadyPresent: if the tool already has a rationale parameter.

    Returns:
        ToolDefinition: the extended tool.
    """
    if RATIONALE_PARAMETER in tool.parameters or RATIONALE_PARAMETER in tool.required:
        raise AlreadyPresent(f"Tool '{tool.name}' already declares '{RATIONALE_PARAMETER}'")

    parameters = copy.deepcopy(tool.parameters)
    parameters[RATIONALE_PARAMETER] = {
        "type": "string",
        "description": "Explain which query arguments the request needs and why.",
    }
    return tool.model_copy(
        update={
            "parameters": parameters,
            "required": (*tool.required, RATIONALE_PARAMETER),
        }
    )


class ToolCall(BaseModel):
    """A function call emitted through structured generation."""

    function_name: str
    arguments: dict[str, Any]


class ResponseOrToolCall(BaseModel):
    """Structured reply: either a prose response or a list of tool calls."""

    tool_rationale: str | None = Field(default=None, description=TOOL_RATIONALE_DESCRIPTION)
    use_tools: bool
    response: str | None = None
    tool_calls: list[ToolCall] | None = None

    @model_validator(mode="after")
    def validate_choice(self) -> Self:
        """Validates that the reply carries what ``use_tools`` announces.

        Raises:
            ValueError: on tool use without calls or a response without text.

        Returns:
            Self: validated reply.
        """
        if self.use_tools and not self.tool_calls:
            raise ValueError("use_tools is true but no tool_calls are given")
        if not self.use_tools and self.response is None:
            raise ValueError("use_tools is false but no response is given")
        return self


def build_structured_output_schema(use_case: UseCase) -> dict[str, Any]:
    """Builds the constrained-output schema replacing native tool calling.

    The schema is the one of ResponseOrToolCall, with the free-form call
    arguments narrowed to the query parameters of the use case.

    Args:
        use_case (UseCase): use case whose collections form the routing enum.

    Returns:
        dict[str, Any]: JSON schema of a ResponseOrToolCall reply.
    """
    schema = ResponseOrToolCall.model_json_schema()
    schema["$defs"]["ToolCall"]["properties"]["arguments"] = {
        "title": "Arguments",
        "type": "object",
        "properties": query_parameters(collection_names(use_case)),
        "required": ["collection_name"],
    }
    return schema


class ParsedCall(BaseModel):
    """A tool call mapped back to a query."""

    model_config = ConfigDict(frozen=True)

    query: QueryRequest
    rationale: str | None = None


class StructuredReply(BaseModel):
    """A parsed structured-generation reply."""

    model_config = ConfigDict(frozen=True)

    use_tools: bool
    response: str | None = None
    rationale: str | None = None
    calls: tuple[ParsedCall, ...] = ()


def _diagnostics(error: ValidationError) -> list[str]:
    return [
        f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}"
        for err in error.errors()
    ]


class ToolCallParser:
    """Maps tool calls of any mode back to QueryRequest values."""

    def __init__(self, use_case: UseCase) -> None:
        """Initialize the parser.

        Args:
            use_case (UseCase): use case the tools were built for.
        """
        self._per_collection = {
            per_collection_tool_name(name): name for name in collection_names(use_case)
        }

    def parse_call(
        self, function_name: str, arguments: str | dict[str, Any]
    ) -> ParsedCall:
        """Parses one native tool call.

        Args:
            function_name (str): name of the called function.
            arguments (str | dict[str, Any]): arguments as JSON text or object.

        Raises:
            ToolCallParseError: if the call does not map to a query.

        Returns:
            ParsedCall: the query and the optional rationale.
        """
        if isinstance(arguments, str):
            try:
                arguments = json.loads(arguments) if arguments.strip() else {}
            except json.JSONDecodeError as e:
                raise ToolCallParseError(function_name, [f"arguments are not JSON: {e}"]) from e
        if not isinstance(arguments, dict):
            raise ToolCallParseError(
                function_name, [f"arguments must be an object, got {type(arguments).__name__}"]
            )

        data = {k: v for k, v in arguments.items() if v is not None}
        rationale = data.pop(RATIONALE_PARAMETER, None)

        if function_name in self._per_collection:
            collection = self._per_collection[function_name]
            given = data.get("collection_name", collection)
            if given != collection:
                raise ToolCallParseError(
                    function_name, [f"collection_name '{given}' contradicts the tool"]
                )
            data["collection_name"] = collection
        elif function_name != TOOL_NAME:
            raise ToolCallParseError(function_name, ["unknown function"])

        try:
            query = QueryRequest.model_validate(data)
        except ValidationError as e:
            raise ToolCallParseError(function_name, _diagnostics(e)) from e

        return ParsedCall(
            query=query, rationale=str(rationale) if rationale is not None else None
        )

    def parse_structured(self, payload: str | dict[str, Any]) -> StructuredReply:
        """Parses a structured-generation reply.

        Args:
            payload (str | dict[str, Any]): reply as JSON text or object.

        Raises:
            ToolCallParseError: if the reply does not satisfy the schema.

        Returns:
            StructuredReply: the parsed reply.
        """
        try:
            if isinstance(payload, str):
                reply = ResponseOrToolCall.model_validate_json(payload)
            else:
                reply = ResponseOrToolCall.model_validate(payload)
        except ValidationError as e:
            raise ToolCallParseError("ResponseOrToolCall", _diagnostics(e)) from e

        calls: tuple[ParsedCall, ...] = ()
        if reply.use_tools:
            calls = tuple(
                self.parse_call(call.function_name, call.arguments)
                for call in reply.tool_calls or []
            )
        return StructuredReply(
            use_tools=reply.use_tools,
            response=reply.response,
            rationale=reply.tool_rationale,
            calls=calls,
        )


class ToolSet(BaseModel):
    """Everything a provider receives for one use case in one mode."""

    model_config = ConfigDict(frozen=True)

    mode: ToolMode
    tools: tuple[ToolDefinition, ...] = ()
    structured_schema: dict[str, Any] | None = None
    structured_description: str | None = None
    parallel_tool_calls: bool = False

    @property
    def structured(self) -> bool:
        """Returns True when replies are constrained to the structured schema."""
        return self.structured_schema is not None


def build_toolset(
    use_case: UseCase,
    mode: ToolMode,
    budget: int = 1024,
    estimator: TokenEstimator = estimate_tokens,
) -> ToolSet:
    """Builds the tools of a use case for a harness mode.

    Args:
        use_case (UseCase): use case to expose.
        mode (ToolMode): harness mode.
        budget (int, optional): token budget of descriptions.
        estimator (TokenEstimator, optional): token estimator.

    Returns:
        ToolSet: tools and flags of the mode.
    """
    match mode:
        case ToolMode.PER_COLLECTION:
            tools = tuple(build_per_collection_tools(use_case, budget, estimator))
            toolset = ToolSet(mode=mode, tools=tools)
        case ToolMode.STRUCTURED:
            tool = build_unified_tool(use_case, budget, estimator)
            toolset = ToolSet(
                mode=mode,
                structured_schema=build_structured_output_schema(use_case),
                structured_description=tool.description,
            )
        case ToolMode.RATIONALE:
            tool = with_rationale(build_unified_tool(use_case, budget, estimator))
            toolset = ToolSet(mode=mode, tools=(tool,))
        case ToolMode.PARALLEL:
            tool = build_unified_tool(use_case, budget, estimator)
            toolset = ToolSet(mode=mode, tools=(tool,), parallel_tool_calls=True)
        case _:
            tool = build_unified_tool(use_case, budget, estimator)
            toolset = ToolSet(mode=mode, tools=(tool,))

    logger.debug(
        "toolset_built",
        use_case=use_case.name,
        mode=mode,
        tools=[t.name for t in toolset.tools],
    )
    return toolset
