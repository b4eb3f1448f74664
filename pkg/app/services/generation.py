"""Benchmark generation: operator combinations, ground truth and commands."""

import asyncio
import itertools
import json
import random
import re
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, Protocol

import structlog
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError

from app.model import (
    DATA_TYPE_BY_KIND,
    OPERAND_KINDS,
    BooleanAggregation,
    BooleanMetric,
    BooleanOperator,
    BooleanPropertyFilter,
    CollectionSchema,
    CombinationId,
    DatasetRecord,
    DataType,
    GenerationVerdict,
    IntAggregation,
    IntMetric,
    IntPropertyFilter,
    NumericOperator,
    OperandKind,
    PropertySchema,
    QueryRequest,
    TextAggregation,
    TextMetric,
    TextOperator,
    TextPropertyFilter,
    UseCase,
)
from app.services.costs import CostLedger
from app.services.providers import ChatMessage, ChatProvider, ChatRequest, ProviderError
from app.services.queries import (
    QueryError,
    operator_signature,
    validate,
)
from app.services.schema_registry import (
    BUILTIN_USE_CASES,
    ParseError,
    PropertyProfile,
    SchemaViolation,
    dump_use_case,
    load_builtin_use_case,
    load_use_case,
    render_description,
)
from app.services.seeding import (
    ADJECTIVES,
    NAME_NOUNS,
    NAME_PREFIXES,
    TOPICS,
    SeedConfiguration,
)
from app.utils.text import format_number, humanize

logger = structlog.get_logger(__name__)

DEFAULT_TOP_OCCURRENCES = 5

COMMAND_PROMPT = (
    "You write natural-language requests for a database assistant.\n\n"
    "Database:\n{description}\n\n"
    "Target query:\n{query}\n\n"
    "Write one request a user could type that can only be answered with exactly "
    "this query. It must need every argument of the query: {operators}. Do not "
    "mention property names verbatim unless natural. Reply with the request only."
)
REVIEW_PROMPT = (
    "A request was written to require a specific database query.\n\n"
    "Request: {command}\n\nQuery:\n{query}\n\n"
    "Check that answering the request needs every one of these arguments: "
    "{operators}, and no others. Reply with a JSON object with keys 'approved' "
    "(boolean), 'critique' (text naming every missing or superfluous argument) "
    "and 'corrected_command' (an improved request, or null)."
)
SCHEMA_PROMPT = (
    "Design a database for this business domain: {hint}.\n\n"
    "Return a JSON object with 'use_case_overview' (a paragraph describing the "
    "domain and how the collections relate) and 'collections': exactly "
    "{collections} collections with camel-case names. Every collection has "
    "'name' and 'properties'; each property has 'name', 'data_type' "
    "(TEXT, NUMBER or BOOLEAN), 'description' and 'searchable'. Every collection "
    "has exactly {text} TEXT, {number} NUMBER and {boolean} BOOLEAN properties, "
    "and exactly one TEXT property with rich searchable content has searchable "
    "set to true. Collections are related in meaning but carry no foreign keys."
)

_NUMERIC_WORDS = {
    NumericOperator.EQ: "exactly",
    NumericOperator.LT: "below",
    NumericOperator.GT: "above",
    NumericOperator.LE: "at most",
    NumericOperator.GE: "at least",
}
_INT_METRIC_PHRASES = {
    IntMetric.COUNT: "count the {p} values",
    IntMetric.TYPE: "report the data type of {p}",
    IntMetric.MIN: "find the lowest {p}",
    IntMetric.MAX: "find the highest {p}",
    IntMetric.MEAN: "compute the average {p}",
    IntMetric.MEDIAN: "compute the median {p}",
    IntMetric.MODE: "find the most common {p}",
    IntMetric.SUM: "compute the total {p}",
}
_BOOLEAN_METRIC_PHRASES = {
    BooleanMetric.COUNT: "count the {p} values",
    BooleanMetric.TYPE: "report the data type of {p}",
    BooleanMetric.TOTAL_TRUE: "count how many have {p} set to true",
    BooleanMetric.TOTAL_FALSE: "count how many have {p} set to false",
    BooleanMetric.PERCENTAGE_TRUE: "give the percentage with {p} set to true",
    BooleanMetric.PERCENTAGE_FALSE: "give the percentage with {p} set to false",
}
_LEADS = ("Find", "Show me", "List")
_SLOT_PREFIX = {
    OperandKind.INT: "integer",
    OperandKind.TEXT: "text",
    OperandKind.BOOL: "boolean",
}
_SLUG = re.compile(r"[^a-z0-9]+")


class GenerationError(Exception):
    """Base error of benchmark generation."""


class GeneratorFailure(GenerationError):
    """Raised when a text generator fails or returns unusable output."""


class GenerationConfiguration(BaseModel):
    """Configuration of benchmark generation."""

    seed: int = 42
    variants: PositiveInt = 1
    reflexion: bool = True
    concurrency: PositiveInt = 4
    max_schema_attempts: PositiveInt = 3
    seed_data: SeedConfiguration = Field(default_factory=SeedConfiguration)


class RecordSkeleton(BaseModel):
    """A ground-truth query waiting for its command."""

    model_config = ConfigDict(frozen=True)

    record_id: str
    use_case: UseCase
    query: QueryRequest
    combination: CombinationId
    variant: int = 0


class CommandGenerator(Protocol):
    """Writes natural-language commands for query skeletons."""

    async def generate(self, skeleton: RecordSkeleton) -> str:
        """Returns a command requiring every operator of the skeleton."""
        ...


class CommandJudge(Protocol):
    """Reviews generated commands."""

    async def review(self, record: DatasetRecord, use_case: UseCase) -> GenerationVerdict:
        """Returns the verdict on a record's command."""
        ...


class SchemaGenerator(Protocol):
    """Proposes use-case documents for a domain."""

    async def propose(
        self, hint: str, profile: PropertyProfile, attempt: int
    ) -> str | Mapping[str, Any]:
        """Returns a use-case document for the domain hint."""
        ...


def enumerate_combinations() -> list[CombinationId]:
    """Returns every valid operator combination in lexicographic order.

    Returns:
        list[CombinationId]: the 63 non-empty combinations.
    """
    combinations: list[CombinationId] = []
    for search, filter_kind, agg_kind, groupby in itertools.product(
        (False, True), OPERAND_KINDS, OPERAND_KINDS, (False, True)
    ):
        active = filter_kind != OperandKind.NONE or agg_kind != OperandKind.NONE
        if search or groupby or active:
            combinations.append(
                CombinationId(
                    search=search,
                    filter_kind=filter_kind,
                    aggregation_kind=agg_kind,
                    groupby=groupby,
                )
            )
    return combinations


COMBINATIONS: tuple[CombinationId, ...] = tuple(enumerate_combinations())


def _property_of(
    collection: CollectionSchema, kind: OperandKind, rng: random.Random
) -> PropertySchema:
    data_type = DATA_TYPE_BY_KIND[kind]
    candidates = collection.properties_of(data_type)
    if data_type == DataType.TEXT:
        plain = [p for p in candidates if not p.searchable]
        candidates = plain or candidates
    if not candidates:
        raise GenerationError(
            f"Collection '{collection.name}' has no {data_type} property"
        )
    return rng.choice(candidates)


def _filter(
    collection: CollectionSchema,
    kind: OperandKind,
    rng: random.Random,
    seed_data: SeedConfiguration,
) -> IntPropertyFilter | TextPropertyFilter | BooleanPropertyFilter:
    prop = _property_of(collection, kind, rng)
    match kind:
        case OperandKind.INT:
            return IntPropertyFilter(
                property_name=prop.name,
                operator=rng.choice(list(NumericOperator)),
                value=float(seed_data.range_for(prop.name).draw(rng)),
            )
        case OperandKind.TEXT:
            if rng.random() < 0.5:
                return TextPropertyFilter(
                    property_name=prop.name,
                    operator=TextOperator.LIKE,
                    value=f"{rng.choice(NAME_PREFIXES)}%",
                )
            return TextPropertyFilter(
                property_name=prop.name,
                operator=TextOperator.EQ,
                value=f"{rng.choice(NAME_PREFIXES)} {rng.choice(NAME_NOUNS)}",
            )
        case _:
            return BooleanPropertyFilter(
                property_name=prop.name,
                operator=rng.choice(list(BooleanOperator)),
                value=rng.random() < 0.5,
            )


def _aggregation(
    collection: CollectionSchema, kind: OperandKind, rng: random.Random
) -> IntAggregation | TextAggregation | BooleanAggregation:
    match kind:
        case OperandKind.INT:
            prop = _property_of(collection, kind, rng)
            return IntAggregation(property_name=prop.name, metric=rng.choice(list(IntMetric)))
        case OperandKind.TEXT:
            prop = rng.choice(collection.properties_of(DataType.TEXT))
            metric = rng.choice(list(TextMetric))
            limit = None
            if metric == TextMetric.TOP_OCCURRENCES:
                limit = rng.choice((None, 3, 5))
            return TextAggregation(
                property_name=prop.name, metric=metric, top_occurrences_limit=limit
            )
        case _:
            prop = _property_of(collection, kind, rng)
            return BooleanAggregation(
                property_name=prop.name, metric=rng.choice(list(BooleanMetric))
            )


def instantiate_ground_truth(
    combination: CombinationId,
    use_case: UseCase,
    seed: int,
    seed_data: SeedConfiguration | None = None,
) -> QueryRequest:
    """Builds a ground-truth query whose signature is the combination.

    The target collection round-robins over the collections by combination
    position and seed; properties, operators and literals are drawn from a
    generator keyed by use case, combination and seed.

    Args:
        combination (CombinationId): operators to use.
        use_case (UseCase): use case to query.
        seed (int): seed of the run.
        seed_data (SeedConfiguration | None, optional): plausible value ranges.

    Raises:
        GenerationError: if the use case lacks a property kind the combination needs.

    Returns:
        QueryRequest: a validated query.
    """
    seed_data = seed_data or SeedConfiguration()
    position = COMBINATIONS.index(combination)
    collection = use_case.collections[(position + seed) % len(use_case.collections)]
    rng = random.Random(f"{use_case.name}:{combination.sort_key()}:{seed}")  # noqa: S311

    arguments: dict[str, Any] = {"collection_name": collection.name}
    if combination.search:
        arguments["search_query"] = f"{rng.choice(ADJECTIVES)} {rng.choice(TOPICS)}"
    if combination.filter_kind != OperandKind.NONE:
        slot = f"{_SLOT_PREFIX[combination.filter_kind]}_property_filter"
        arguments[slot] = _filter(collection, combination.filter_kind, rng, seed_data)
    if combination.aggregation_kind != OperandKind.NONE:
        slot = f"{_SLOT_PREFIX[combination.aggregation_kind]}_property_aggregation"
        arguments[slot] = _aggregation(collection, combination.aggregation_kind, rng)
    if combination.groupby:
        groupable = [p for p in collection.properties if not p.searchable]
        arguments["groupby_property"] = rng.choice(groupable).name

    query = QueryRequest.model_validate(arguments)
    try:
        validate(query, use_case)
        signature = operator_signature(query)
    except QueryError as e:
        raise GenerationError(f"Generated query for {combination} is invalid: {e}") from e
    if signature != combination:
        raise GenerationError(
            f"Generated query has signature {signature}, expected {combination}"
        )
    return query


def record_id(use_case: str, position: int, variant: int, variants: int) -> str:
    """Returns the id of a record; variants add a ``-v<k>`` suffix."""
    base = f"{use_case}-{position:02d}"
    return f"{base}-v{variant + 1}" if variants > 1 else base


def operator_names(combination: CombinationId) -> list[str]:
    """Returns the arguments a combination needs, for prompts and critiques."""
    names: list[str] = []
    if combination.search:
        names.append("search_query")
    if combination.filter_kind != OperandKind.NONE:
        names.append(f"{_SLOT_PREFIX[combination.filter_kind]}_property_filter")
    if combination.aggregation_kind != OperandKind.NONE:
        names.append(f"{_SLOT_PREFIX[combination.aggregation_kind]}_property_aggregation")
    if combination.groupby:
        names.append("groupby_property")
    return names


def _filter_phrase(query: QueryRequest) -> str:
    match query.filters:
        case [IntPropertyFilter(property_name=p, operator=op, value=v)]:
            return f" whose {humanize(p)} is {_NUMERIC_WORDS[op]} {format_number(v)}"
        case [TextPropertyFilter(property_name=p, operator=TextOperator.LIKE, value=v)]:
            if v.endswith("%") and not any(c in v[:-1] for c in "%_"):
                return f" whose {humanize(p)} starts with '{v[:-1]}'"
            return f" whose {humanize(p)} matches the pattern '{v}'"
        case [TextPropertyFilter(property_name=p, value=v)]:
            return f" whose {humanize(p)} is '{v}'"
        case [BooleanPropertyFilter(property_name=p, operator=op, value=v)]:
            negation = " not" if op == BooleanOperator.NE else ""
            return f" where {humanize(p)} is{negation} {str(v).lower()}"
    return ""


def _aggregation_phrase(query: QueryRequest) -> str | None:
    match query.aggregations:
        case [IntAggregation(property_name=p, metric=metric)]:
            return _INT_METRIC_PHRASES[metric].format(p=humanize(p))
        case [BooleanAggregation(property_name=p, metric=metric)]:
            return _BOOLEAN_METRIC_PHRASES[metric].format(p=humanize(p))
        case [TextAggregation(property_name=p, metric=TextMetric.TOP_OCCURRENCES) as agg]:
            limit = agg.top_occurrences_limit or DEFAULT_TOP_OCCURRENCES
            return f"list the top {limit} most frequent {humanize(p)} values"
        case [TextAggregation(property_name=p, metric=TextMetric.TYPE)]:
            return f"report the data type of {humanize(p)}"
        case [TextAggregation(property_name=p)]:
            return f"count the {humanize(p)} values"
    return None


def template_command(query: QueryRequest, variant: int = 0) -> str:
    """Writes a command for a query from fixed phrase templates.

    Args:
        query (QueryRequest): query to describe.
        variant (int, optional): phrasing variant. Defaults to 0.

    Returns:
        str: the command.
    """
    noun = humanize(query.collection_name)
    subject = noun
    if query.search_query is not None:
        subject += f" about '{query.search_query}'"
    subject += _filter_phrase(query)
    group = (
        f", grouped by {humanize(query.groupby_property)}"
        if query.groupby_property is not None
        else ""
    )

    aggregation = _aggregation_phrase(query)
    if aggregation is None:
        lead = _LEADS[variant % len(_LEADS)]
        return f"{lead} {subject}{group}."
    opener = ("For", "Looking at", "Across")[variant % 3]
    return f"{opener} {subject}, {aggregation}{group}."


class TemplateCommandGenerator:
    """Deterministic command generator working without a model."""

    async def generate(self, skeleton: RecordSkeleton) -> str:
        """Returns the template command of the skeleton's query."""
        return template_command(skeleton.query, skeleton.variant)


def _mentions(command: str, *phrases: str) -> bool:
    text = command.casefold()
    return all(phrase.casefold() in text for phrase in phrases)


def missing_operators(command: str, query: QueryRequest) -> list[str]:
    """Returns the arguments of a query a command does not mention.

    A filter or aggregation counts as mentioned when its property is named,
    a grouping when ``group`` and its property appear, a search when its text
    appears.
    """
    missing: list[str] = []
    if query.search_query is not None and not _mentions(command, query.search_query):
        missing.append("search_query")
    for name, slot in (
        ("integer_property_filter", query.integer_property_filter),
        ("text_property_filter", query.text_property_filter),
        ("boolean_property_filter", query.boolean_property_filter),
        ("integer_property_aggregation", query.integer_property_aggregation),
        ("text_property_aggregation", query.text_property_aggregation),
        ("boolean_property_aggregation", query.boolean_property_aggregation),
    ):
        if slot is not None and not _mentions(command, humanize(slot.property_name)):
            missing.append(name)
    if query.groupby_property is not None and not _mentions(
        command, "group", humanize(query.groupby_property)
    ):
        missing.append("groupby_property")
    return missing


class TemplateJudge:
    """Deterministic reviewer checking that every operator is mentioned."""

    async def review(self, record: DatasetRecord, use_case: UseCase) -> GenerationVerdict:
        """Rejects commands that leave an argument of the query unmentioned."""
        missing = missing_operators(record.nl_command, record.ground_truth_query)
        if not missing:
            return GenerationVerdict(record_id=record.record_id, approved=True)
        return GenerationVerdict(
            record_id=record.record_id,
            approved=False,
            critique=f"The command does not ask for: {', '.join(missing)}",
            corrected_command=template_command(record.ground_truth_query),
        )


def _matching_builtin(hint: str) -> str | None:
    slug = _SLUG.sub("_", hint.casefold()).strip("_")
    return next(
        (
            name
            for name in BUILTIN_USE_CASES
            if slug and (name.startswith(slug) or slug.startswith(name.rstrip("s")))
        ),
        None,
    )


def _camel(words: str) -> str:
    parts = [p for p in _SLUG.split(words.casefold()) if p]
    return "".join(p.capitalize() for p in parts) or "Domain"


def placeholder_use_case(hint: str, profile: PropertyProfile) -> dict[str, Any]:
    """Builds a placeholder use-case document satisfying a property profile.

    Args:
        hint (str): domain hint used for names.
        profile (PropertyProfile): expected shape.

    Returns:
        dict[str, Any]: the document.
    """
    stem = _camel(hint)
    collections = []
    for index in range(1, profile.collections + 1):
        properties = []
        for n in range(1, profile.text + 1):
            searchable = n == min(2, profile.text)
            properties.append(
                {
                    "name": "details" if searchable else f"label{n}",
                    "data_type": "TEXT",
                    "description": "Searchable free-text details."
                    if searchable
                    else "A short label.",
                    "searchable": searchable,
                }
            )
        properties += [
            {"name": f"amount{n}", "data_type": "NUMBER", "description": "A numeric measure."}
            for n in range(1, profile.number + 1)
        ]
        properties += [
            {"name": f"flag{n}", "data_type": "BOOLEAN", "description": "A yes/no flag."}
            for n in range(1, profile.boolean + 1)
        ]
        collections.append({"name": f"{stem}Records{index}", "properties": properties})
    return {
        "use_case_overview": f"Placeholder records for the {hint} domain.",
        "collections": collections,
    }


class TemplateSchemaGenerator:
    """Serves packaged use cases by hint, placeholders otherwise."""

    async def propose(
        self, hint: str, profile: PropertyProfile, attempt: int
    ) -> str | Mapping[str, Any]:
        """Returns a packaged or placeholder document for the hint."""
        builtin = _matching_builtin(hint)
        if builtin is not None and profile == PropertyProfile():
            return dump_use_case(load_builtin_use_case(builtin))
        return placeholder_use_case(hint, profile)


class _ModelClient:
    def __init__(self, provider: ChatProvider, model: str, ledger: CostLedger | None) -> None:
        self.provider = provider
        self.model = model
        self.ledger = ledger

    async def ask(
        self, key: str, prompt: str, schema: dict[str, Any] | None = None
    ) -> str:
        request = ChatRequest(
            key=key,
            model=self.model,
            messages=(ChatMessage(role="user", content=prompt),),
            response_schema=schema,
        )
        try:
            response = await self.provider.complete(request)
        except ProviderError as e:
            raise GeneratorFailure(f"Model '{self.model}' failed on '{key}': {e}") from e
        if self.ledger is not None:
            self.ledger.record(self.model, response.usage)
        text = (response.text or "").strip()
        if not text:
            raise GeneratorFailure(f"Model '{self.model}' returned no text for '{key}'")
        return text


class LLMCommandGenerator:
    """Command generator backed by a chat model."""

    def __init__(
        self,
        provider: ChatProvider,
        model: str,
        ledger: CostLedger | None = None,
        token_budget: int = 1024,
    ) -> None:
        """Initialize the generator.

        Args:
            provider (ChatProvider): model provider.
            model (str): model name.
            ledger (CostLedger | None, optional): receives token usage.
            token_budget (int, optional): budget of the schema description.
        """
        self._client = _ModelClient(provider, model, ledger)
        self._budget = token_budget

    async def generate(self, skeleton: RecordSkeleton) -> str:
        """Asks the model for a command requiring the skeleton's operators.

        Raises:
            GeneratorFailure: if the model fails or answers with nothing.
        """
        prompt = COMMAND_PROMPT.format(
            description=render_description(skeleton.use_case, self._budget),
            query=json.dumps(skeleton.query.to_arguments(), indent=2),
            operators=", ".join(operator_names(skeleton.combination)),
        )
        command = await self._client.ask(f"command-{skeleton.record_id}", prompt)
        return command.strip().strip('"')


class _Review(BaseModel):
    approved: bool
    critique: str = ""
    corrected_command: str | None = None


class LLMJudge:
    """Command reviewer backed by a chat model."""

    def __init__(
        self, provider: ChatProvider, model: str, ledger: CostLedger | None = None
    ) -> None:
        """Initialize the reviewer.

        Args:
            provider (ChatProvider): model provider.
            model (str): model name.
            ledger (CostLedger | None, optional): receives token usage.
        """
        self._client = _ModelClient(provider, model, ledger)

    async def review(self, record: DatasetRecord, use_case: UseCase) -> GenerationVerdict:
        """Asks the model whether the command needs exactly the query's operators.

        Raises:
            GeneratorFailure: if the model fails or its verdict is invalid.
        """
        prompt = REVIEW_PROMPT.format(
            command=record.nl_command,
            query=json.dumps(record.ground_truth_query.to_arguments(), indent=2),
            operators=", ".join(operator_names(record.combination)),
        )
        text = await self._client.ask(
            f"review-{record.record_id}", prompt, _Review.model_json_schema()
        )
        try:
            review = _Review.model_validate_json(text)
            return GenerationVerdict(record_id=record.record_id, **review.model_dump())
        except ValidationError as e:
            raise GeneratorFailure(
                f"Invalid verdict for record '{record.record_id}': {e}"
            ) from e


class LLMSchemaGenerator:
    """Use-case generator backed by a chat model."""

    def __init__(
        self, provider: ChatProvider, model: str, ledger: CostLedger | None = None
    ) -> None:
        """Initialize the generator.

        Args:
            provider (ChatProvider): model provider.
            model (str): model name.
            ledger (CostLedger | None, optional): receives token usage.
        """
        self._client = _ModelClient(provider, model, ledger)

    async def propose(
        self, hint: str, profile: PropertyProfile, attempt: int
    ) -> str | Mapping[str, Any]:
        """Asks the model for a use-case document."""
        prompt = SCHEMA_PROMPT.format(
            hint=hint,
            collections=profile.collections,
            text=profile.text,
            number=profile.number,
            boolean=profile.boolean,
        )
        slug = _SLUG.sub("_", hint.casefold()).strip("_")
        return await self._client.ask(f"schema-{slug}-{attempt}", prompt)


async def generate_command(skeleton: RecordSkeleton, generator: CommandGenerator) -> str:
    """Produces the command of a skeleton.

    Raises:
        GeneratorFailure: if the generator fails or returns an empty command.
    """
    command = (await generator.generate(skeleton)).strip()
    if not command:
        raise GeneratorFailure(f"Empty command generated for '{skeleton.record_id}'")
    return command


async def reflexion_check(
    record: DatasetRecord, use_case: UseCase, judge: CommandJudge
) -> GenerationVerdict:
    """Reviews a generated command and logs rejections.

    Raises:
        GeneratorFailure: if the judge fails.
    """
    verdict = await judge.review(record, use_case)
    if not verdict.approved:
        logger.warning(
            "verdict_rejected",
            record_id=record.record_id,
            critique=verdict.critique,
            corrected=verdict.corrected_command is not None,
        )
    return verdict


def apply_verdict(record: DatasetRecord, verdict: GenerationVerdict) -> DatasetRecord:
    """Replaces the command by the correction of a rejecting verdict."""
    if verdict.approved or not verdict.corrected_command:
        return record
    return record.model_copy(update={"nl_command": verdict.corrected_command})


def use_case_name(hint: str) -> str:
    """Returns the use-case name derived from a domain hint."""
    return _matching_builtin(hint) or _SLUG.sub("_", hint.casefold()).strip("_")


async def generate_use_case(
    hint: str,
    generator: SchemaGenerator,
    profile: PropertyProfile | None = None,
    max_attempts: int = 3,
) -> UseCase:
    """Asks a generator for a use case until one passes validation.

    Args:
        hint (str): domain hint, such as ``restaurant``.
        generator (SchemaGenerator): schema generator.
        profile (PropertyProfile | None, optional): expected shape.
        max_attempts (int, optional): attempts before giving up.

    Raises:
        GeneratorFailure: if the generator fails.
        SchemaViolation: if the last attempt breaks the profile.
        ParseError: if the last attempt is not a use-case document.

    Returns:
        UseCase: the validated use case.
    """
    profile = profile or PropertyProfile()
    name = use_case_name(hint)
    for attempt in range(1, max_attempts + 1):
        document = await generator.propose(hint, profile, attempt)
        try:
            return load_use_case(document, profile, name=name, source=f"schema:{hint}")
        except (ParseError, SchemaViolation) as e:
            logger.warning(
                "schema_attempt_rejected", hint=hint, attempt=attempt, reason=str(e)
            )
            if attempt == max_attempts:
                raise
    raise GeneratorFailure(f"No schema attempt was made for '{hint}'")


def skeletons(use_case: UseCase, config: GenerationConfiguration) -> list[RecordSkeleton]:
    """Instantiates the ground truth of every combination and variant."""
    result: list[RecordSkeleton] = []
    for position, combination in enumerate(COMBINATIONS):
        query = instantiate_ground_truth(
            combination, use_case, config.seed, config.seed_data
        )
        for variant in range(config.variants):
            result.append(
                RecordSkeleton(
                    record_id=record_id(use_case.name, position, variant, config.variants),
                    use_case=use_case,
                    query=query,
                    combination=combination,
                    variant=variant,
                )
            )
    return result


class GeneratedDataset(BaseModel):
    """Records of one use case with the verdicts of their review."""

    model_config = ConfigDict(frozen=True)

    use_case: UseCase
    records: tuple[DatasetRecord, ...]
    verdicts: tuple[GenerationVerdict, ...] = ()


async def generate_dataset(
    use_case: UseCase,
    generator: CommandGenerator,
    judge: CommandJudge | None = None,
    config: GenerationConfiguration | None = None,
) -> GeneratedDataset:
    """Generates the records of a use case in combination order.

    Commands are generated concurrently under the configured cap; with a
    judge every command is reviewed and corrected when the verdict supplies a
    correction.

    Args:
        use_case (UseCase): use case to cover.
        generator (CommandGenerator): command generator.
        judge (CommandJudge | None, optional): reviewer, if any.
        config (GenerationConfiguration | None, optional): configuration.

    Raises:
        GeneratorFailure: if a generator or the judge fails.

    Returns:
        GeneratedDataset: records and verdicts.
    """
    config = config or GenerationConfiguration()
    semaphore = asyncio.Semaphore(config.concurrency)

    async def build(
        skeleton: RecordSkeleton,
    ) -> tuple[DatasetRecord, GenerationVerdict | None]:
        async with semaphore:
            command = await generate_command(skeleton, generator)
            record = DatasetRecord(
                record_id=skeleton.record_id,
                nl_command=command,
                ground_truth_query=skeleton.query,
                schema_ref=use_case.name,
                combination=skeleton.combination,
            )
            if judge is None or not config.reflexion:
                return record, None
            verdict = await reflexion_check(record, use_case, judge)
            return apply_verdict(record, verdict), verdict

    built = await asyncio.gather(*(build(s) for s in skeletons(use_case, config)))
    records = tuple(record for record, _ in built)
    verdicts = tuple(verdict for _, verdict in built if verdict is not None)
    logger.info(
        "dataset_generated",
        use_case=use_case.name,
        records=len(records),
        rejected=sum(not v.approved for v in verdicts),
    )
    return GeneratedDataset(use_case=use_case, records=records, verdicts=verdicts)


def write_dataset(path: Path, records: Sequence[DatasetRecord]) -> None:
    """Writes records as one JSON object per line, in the given order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as stream:
        for record in records:
            stream.write(record.model_dump_json(by_alias=True) + "\n")


def read_dataset(
    path: Path, use_cases: Mapping[str, UseCase] | None = None
) -> list[DatasetRecord]:
    """Reads records and rechecks their operator signatures.

    Args:
        path (Path): dataset file.
        use_cases (Mapping[str, UseCase] | None, optional): use cases to
            validate the ground truth against.

    Raises:
        ParseError: if a line is invalid or a record is inconsistent.

    Returns:
        list[DatasetRecord]: records in file order.
    """
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ParseError(str(path), str(e)) from e

    records: list[DatasetRecord] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        source = f"{path}:{number}"
        try:
            record = DatasetRecord.model_validate_json(line)
        except ValidationError as e:
            raise ParseError(source, str(e)) from e
        try:
            signature = operator_signature(record.ground_truth_query)
            if use_cases is not None and record.schema_ref in use_cases:
                validate(record.ground_truth_query, use_cases[record.schema_ref])
        except QueryError as e:
            raise ParseError(source, f"record '{record.record_id}': {e}") from e
        if signature != record.combination:
            raise ParseError(
                source,
                f"record '{record.record_id}' has signature {signature}, "
                f"declared {record.combination}",
            )
        records.append(record)
    return records


def write_verdicts(path: Path, verdicts: Sequence[GenerationVerdict]) -> None:
    """Writes the review log, one verdict per line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(v.model_dump_json() + "\n" for v in verdicts), encoding="utf-8"
    )
