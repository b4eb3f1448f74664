"""Deterministic seed data for the collections of a use case."""

import json
import random
from pathlib import Path
from typing import Any

import structlog
from pydantic import BaseModel, Field, PositiveFloat, PositiveInt, model_validator

from app.model import CollectionSchema, DataType, PropertySchema, UseCase
from app.services.engine import Row

logger = structlog.get_logger(__name__)

NAME_PREFIXES = ("La", "The", "Casa", "Blue", "Golden", "Little")
NAME_NOUNS = ("Trattoria", "Garden", "Lantern", "Harbor", "Oak", "Corner")
ADJECTIVES = (
    "cozy",
    "romantic",
    "modern",
    "quiet",
    "lively",
    "rustic",
    "elegant",
    "affordable",
    "seasonal",
    "organic",
    "family",
    "historic",
)
TOPICS = (
    "italian",
    "vegetarian",
    "jazz",
    "outdoor",
    "coastal",
    "mountain",
    "modernist",
    "orthopedic",
    "beginner",
    "weekend",
    "brunch",
    "gallery",
)
FEATURES = (
    "friendly staff",
    "a relaxing atmosphere",
    "live music",
    "healthy options",
    "flexible scheduling",
    "a scenic view",
    "expert guidance",
    "hands-on sessions",
)


class SeedDataError(Exception):
    """Raised when seed data cannot be read or written."""


class ValueRange(BaseModel):
    """Range of plausible values of a numeric property."""

    low: float
    high: float
    step: PositiveFloat = 1.0

    @model_validator(mode="after")
    def validate_bounds(self) -> "ValueRange":
        """Validates that the range is not inverted.

        Raises:
            ValueError: if low exceeds high.

        Returns:
            ValueRange: validated range.
        """
        if self.low > self.high:
            raise ValueError(f"Range low={self.low} exceeds high={self.high}")
        return self

    def draw(self, rng: random.Random) -> float | int:
        """Draws a value on the step grid of the range."""
        steps = int((self.high - self.low) / self.step + 1e-9)
        value = round(self.low + rng.randint(0, steps) * self.step, 6)
        return int(value) if value.is_integer() and self.step.is_integer() else value


def _default_ranges() -> dict[str, ValueRange]:
    return {
        "price": ValueRange(low=5, high=60, step=0.5),
        "averageRating": ValueRange(low=1, high=5, step=0.5),
        "partySize": ValueRange(low=1, high=12),
        "satisfactionScore": ValueRange(low=1, high=5, step=0.5),
        "yearsOfExperience": ValueRange(low=1, high=40),
        "durationMinutes": ValueRange(low=15, high=90, step=15),
        "durationWeeks": ValueRange(low=1, high=16),
        "rating": ValueRange(low=1, high=5, step=0.5),
        "progressPercent": ValueRange(low=0, high=100, step=5),
        "averageDailyCost": ValueRange(low=40, high=400, step=10),
        "nightlyRate": ValueRange(low=50, high=600, step=10),
        "durationHours": ValueRange(low=1, high=10, step=0.5),
        "birthYear": ValueRange(low=1850, high=2000),
        "estimatedValue": ValueRange(low=1, high=500),
        "ticketPrice": ValueRange(low=0, high=45, step=2.5),
    }


class SeedConfiguration(BaseModel):
    """Configuration of the seed data generator."""

    rows_per_collection: PositiveInt = 50
    ranges: dict[str, ValueRange] = Field(default_factory=_default_ranges)
    default_range: ValueRange = Field(default_factory=lambda: ValueRange(low=0, high=100))

    def range_for(self, property_name: str) -> ValueRange:
        """Returns the value range of a numeric property."""
        return self.ranges.get(property_name, self.default_range)


def _draw(prop: PropertySchema, rng: random.Random, config: SeedConfiguration) -> Any:
    match prop.data_type:
        case DataType.NUMBER:
            return config.range_for(prop.name).draw(rng)
        case DataType.BOOLEAN:
            return rng.random() < 0.5
        case _ if prop.searchable:
            first, second = rng.sample(ADJECTIVES, 2)
            topic = rng.choice(TOPICS)
            return f"A {first} and {second} {topic} place with {rng.choice(FEATURES)}."
        case _:
            return f"{rng.choice(NAME_PREFIXES)} {rng.choice(NAME_NOUNS)}"


def seed_collection(
    use_case: str,
    collection: CollectionSchema,
    seed: int,
    config: SeedConfiguration | None = None,
) -> list[Row]:
    """Generates the rows of one collection.

    The generator is keyed by use case, collection and seed, so collections
    never share a stream.

    Args:
        use_case (str): use-case name.
        collection (CollectionSchema): collection to fill.
        seed (int): seed of the run.
        config (SeedConfiguration | None, optional): generator configuration.

    Returns:
        list[Row]: generated rows.
    """
    config = config or SeedConfiguration()
    rng = random.Random(f"{use_case}:{collection.name}:{seed}")  # noqa: S311
    return [
        {prop.name: _draw(prop, rng, config) for prop in collection.properties}
        for _ in range(config.rows_per_collection)
    ]


def seed_use_case(
    use_case: UseCase, seed: int, config: SeedConfiguration | None = None
) -> dict[str, list[Row]]:
    """Generates rows for every collection of a use case.

    Args:
        use_case (UseCase): use case to fill.
        seed (int): seed of the run.
        config (SeedConfiguration | None, optional): generator configuration.

    Returns:
        dict[str, list[Row]]: rows keyed by collection name.
    """
    data = {
        collection.name: seed_collection(use_case.name, collection, seed, config)
        for collection in use_case.collections
    }
    logger.debug(
        "use_case_seeded",
        use_case=use_case.name,
        seed=seed,
        rows={name: len(rows) for name, rows in data.items()},
    )
    return data


def write_seed_data(path: Path, data: dict[str, list[Row]]) -> None:
    """Writes seed data as per-collection row arrays.

    Raises:
        SeedDataError: if the file cannot be written.
    """
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise SeedDataError(f"Cannot write seed data to {path}: {e}") from e


def read_seed_data(path: Path) -> dict[str, list[Row]]:
    """Reads seed data written by write_seed_data.

    Raises:
        SeedDataError: if the file is missing or malformed.
    """
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise SeedDataError(f"Cannot read seed data from {path}: {e}") from e
    if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
        raise SeedDataError(f"Seed data in {path} must map collections to row arrays")
    return data
