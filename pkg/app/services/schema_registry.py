"""Use-case schemas: loading, structural validation and description rendering."""

import json
from collections import Counter
from collections.abc import Callable, Mapping
from pathlib import Path
from typing import Any

import structlog
from pydantic import BaseModel, Field, PositiveInt, ValidationError

from app import APP_PATH
from app.model import CollectionSchema, DataType, UseCase
from app.utils.text import estimate_tokens

logger = structlog.get_logger(__name__)

BUILTIN_USE_CASES_PATH = APP_PATH / "data" / "use_cases"
BUILTIN_USE_CASES: tuple[str, ...] = (
    "restaurants",
    "health_clinics",
    "courses",
    "travel_planning",
    "visual_arts",
)
MIN_TOKEN_BUDGET = 64

type TokenEstimator = Callable[[str], int]


class SchemaRegistryError(Exception):
    """Base error of the schema registry."""


class ParseError(SchemaRegistryError):
    """Raised when a use-case document cannot be parsed."""

    def __init__(self, source: str, reason: str) -> None:
        """Initialize the error.

        Args:
            source (str): where the document came from.
            reason (str): what is wrong with it.
        """
        super().__init__(f"Cannot parse use case from {source}: {reason}")
        self.source = source
        self.reason = reason


class SchemaViolation(SchemaRegistryError):
    """Raised when a use case breaks the structural conventions."""

    def __init__(self, collection: str, reason: str, property: str | None = None):
        """Initialize the error.

        Args:
            collection (str): offending collection name.
            reason (str): violated convention.
            property (str | None, optional): offending property. Defaults to None.
        """
        where = f"{collection}.{property}" if property else collection
        super().__init__(f"Schema violation in '{where}': {reason}")
        self.collection = collection
        self.property = property
        self.reason = reason


class BudgetExceeded(SchemaRegistryError):
    """Raised when a description cannot be rendered within the token budget."""

    def __init__(self, estimated: int, budget: int) -> None:
        """Initialize the error.

        Args:
            estimated (int): estimated tokens of the shortest rendering.
            budget (int): allowed tokens.
        """
        super().__init__(
            f"Collections description needs ~{estimated} tokens "
            f"even when truncated, budget is {budget}"
        )
        self.estimated = estimated
        self.budget = budget


class PropertyProfile(BaseModel):
    """Number of collections and properties per data type of every use case."""

    text: int = Field(default=2, ge=1)
    number: int = Field(default=1, ge=0)
    boolean: int = Field(default=1, ge=0)
    collections: PositiveInt = 3

    def count_of(self, data_type: DataType) -> int:
        """Returns the expected number of properties of a data type."""
        return {
            DataType.TEXT: self.text,
            DataType.NUMBER: self.number,
            DataType.BOOLEAN: self.boolean,
        }[data_type]

    @property
    def properties_per_collection(self) -> int:
        """Returns the expected number of properties per collection."""
        return self.text + self.number + self.boolean


class RegistryConfiguration(BaseModel):
    """Configuration of the schema registry."""

    profile: PropertyProfile = Field(default_factory=PropertyProfile)
    token_budget: int = Field(default=1024, ge=MIN_TOKEN_BUDGET)


def _validate_collection(collection: CollectionSchema, profile: PropertyProfile) -> None:
    names = Counter(p.name for p in collection.properties)
    for name, count in names.items():
        if count > 1:
            raise SchemaViolation(
                collection.name, f"property declared {count} times", property=name
            )

    if len(collection.properties) != profile.properties_per_collection:
        raise SchemaViolation(
            collection.name,
            f"expected {profile.properties_per_collection} properties, "
            f"found {len(collection.properties)}",
        )

    for data_type in DataType:
        found = len(collection.properties_of(data_type))
        expected = profile.count_of(data_type)
        if found != expected:
            raise SchemaViolation(
                collection.name,
                f"expected {expected} {data_type} properties, found {found}",
            )

    searchable = [p for p in collection.properties if p.searchable]
    if len(searchable) != 1:
        raise SchemaViolation(
            collection.name,
            f"expected exactly one searchable property, found {len(searchable)}",
        )
    if searchable[0].data_type != DataType.TEXT:
        raise SchemaViolation(
            collection.name,
            f"searchable property must be TEXT, not {searchable[0].data_type}",
            property=searchable[0].name,
        )


def validate_use_case(use_case: UseCase, profile: PropertyProfile) -> UseCase:
    """Checks a use case against the property profile.

    Args:
        use_case (UseCase): use case to check.
        profile (PropertyProfile): expected shape.

    Raises:
        SchemaViolation: on the first broken convention.

    Returns:
        UseCase: the same use case.
    """
    if len(use_case.collections) != profile.collections:
        raise SchemaViolation(
            use_case.name,
            f"expected {profile.collections} collections, "
            f"found {len(use_case.collections)}",
        )

    names = Counter(c.name for c in use_case.collections)
    for name, count in names.items():
        if count > 1:
            raise SchemaViolation(name, f"collection declared {count} times")

    for collection in use_case.collections:
        _validate_collection(collection, profile)
    return use_case


def load_use_case(
    document: str | bytes | Mapping[str, Any],
    profile: PropertyProfile | None = None,
    name: str | None = None,
    source: str = "<document>",
) -> UseCase:
    """Parses and validates a use-case document.

    The document may carry its own ``name``; otherwise ``name`` is used.

    Args:
        document (str | bytes | Mapping[str, Any]): serialized or decoded document.
        profile (PropertyProfile | None, optional): expected shape. Defaults to
            the 2/1/1 profile with three collections.
        name (str | None, optional): fallback use-case name. Defaults to None.
        source (str, optional): label used in error messages.

    Raises:
        ParseError: if the document is malformed.
        SchemaViolation: if the use case breaks the profile.

    Returns:
        UseCase: the validated use case.
    """
    if isinstance(document, str | bytes):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as e:
            raise ParseError(source, str(e)) from e
    else:
        data = dict(document)

    if not isinstance(data, dict):
        raise ParseError(source, f"expected an object, got {type(data).__name__}")

    data = {"name": name, **data} if "name" not in data else data
    if not data.get("name"):
        raise ParseError(source, "use case has no name")

    try:
        use_case = UseCase.model_validate(data)
    except ValidationError as e:
        raise ParseError(source, str(e)) from e

    return validate_use_case(use_case, profile or PropertyProfile())


def load_use_case_file(path: Path, profile: PropertyProfile | None = None) -> UseCase:
    """Loads a use case from a file named after it.

    Args:
        path (Path): file of the use-case document.
        profile (PropertyProfile | None, optional): expected shape.

    Raises:
        ParseError: if the file cannot be read or parsed.

    Returns:
        UseCase: the validated use case.
    """
    try:
        content = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(str(path), str(e)) from e
    return load_use_case(content, profile, name=path.stem, source=str(path))


def load_builtin_use_case(name: str, profile: PropertyProfile | None = None) -> UseCase:
    """Loads one of the packaged use cases.

    Args:
        name (str): use-case name, e.g. ``restaurants``.
        profile (PropertyProfile | None, optional): expected shape.

    Raises:
        ParseError: if no packaged use case has that name.

    Returns:
        UseCase: the validated use case.
    """
    path = BUILTIN_USE_CASES_PATH / f"{name}.json"
    if not path.exists():
        raise ParseError(
            name, f"no packaged use case, choose from {', '.join(BUILTIN_USE_CASES)}"
        )
    return load_use_case_file(path, profile)


def dump_use_case(use_case: UseCase) -> str:
    """Serializes a use case to its document form."""
    return json.dumps(use_case.model_dump(mode="json"), indent=2) + "\n"


def collection_names(use_case: UseCase) -> list[str]:
    """Returns the collection names in declaration order."""
    return [collection.name for collection in use_case.collections]


def _render(use_case: UseCase, with_descriptions: bool, with_overview: bool) -> str:
    blocks: list[str] = []
    if with_overview and use_case.use_case_overview:
        blocks.append(use_case.use_case_overview)

    for collection in use_case.collections:
        lines = [f"Collection: {collection.name}"]
        for prop in collection.properties:
            kind = f"{prop.data_type}, searchable" if prop.searchable else prop.data_type
            line = f"  - {prop.name} ({kind})"
            if with_descriptions and prop.description:
                line += f": {prop.description}"
            lines.append(line)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def render_description(
    use_case: UseCase,
    token_budget: int = 1024,
    estimator: TokenEstimator = estimate_tokens,
) -> str:
    """Renders the collections description embedded in tool definitions.

    Property descriptions are dropped first, then the overview. Names and
    types are always kept.

    Args:
        use_case (UseCase): use case to describe.
        token_budget (int, optional): maximum estimated tokens. Defaults to 1024.
        estimator (TokenEstimator, optional): token estimator.

    Raises:
        ValueError: if the budget is below the minimum.
        BudgetExceeded: if even the shortest rendering is too long.

    Returns:
        str: the description.
    """
    if token_budget < MIN_TOKEN_BUDGET:
        raise ValueError(
            f"Token budget must be at least {MIN_TOKEN_BUDGET}, got {token_budget}"
        )

    estimated = 0
    for with_descriptions, with_overview in ((True, True), (False, True), (False, False)):
        text = _render(use_case, with_descriptions, with_overview)
        estimated = estimator(text)
        if estimated <= token_budget:
            if not with_descriptions:
                logger.debug(
                    "description_truncated",
                    use_case=use_case.name,
                    overview_kept=with_overview,
                    estimated_tokens=estimated,
                    budget=token_budget,
                )
            return text
    raise BudgetExceeded(estimated, token_budget)
