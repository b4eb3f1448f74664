"""Builders of datasets, provider payloads and random queries for tests."""

import json
import random
from typing import Any

from app.model import (
    BooleanAggregation,
    BooleanMetric,
    BooleanOperator,
    BooleanPropertyFilter,
    CollectionSchema,
    DatasetRecord,
    DataType,
    IntAggregation,
    IntMetric,
    IntPropertyFilter,
    NumericOperator,
    QueryRequest,
    TextAggregation,
    TextMetric,
    TextOperator,
    TextPropertyFilter,
    TokenUsage,
    UseCase,
)
from app.services.generation import GenerationConfiguration, skeletons, template_command
from app.services.providers import ReplayArchive, ReplayEntry
from app.services.toolgen import TOOL_NAME

MODEL_A = "model-a"
MODEL_B = "model-b"

NAMES = (
    "La Trattoria",
    "Blue Oak",
    "Casa Garden",
    "The Corner",
    "Golden Harbor",
    "Little Lantern",
)
WORDS = ("cozy", "romantic", "vegan", "pasta", "garden", "spicy", "quiet", "family")

type Row = dict[str, Any]
type Data = dict[str, list[Row]]


def build_dataset(use_case: UseCase, seed: int = 42, variants: int = 1) -> list[DatasetRecord]:
    """Builds the template dataset of a use case without any provider."""
    config = GenerationConfiguration(seed=seed, variants=variants)
    return [
        DatasetRecord(
            record_id=s.record_id,
            nl_command=template_command(s.query, s.variant),
            ground_truth_query=s.query,
            schema_ref=use_case.name,
            combination=s.combination,
        )
        for s in skeletons(use_case, config)
    ]


def openai_tool_payload(
    calls: list[tuple[str, dict[str, Any] | str]], usage: tuple[int, int] = (120, 30)
) -> dict[str, Any]:
    """Returns a chat completion carrying tool calls."""
    return {
        "id": "chatcmpl-test",
        "choices": [
            {
                "index": 0,
                "message": {
                    "role": "assistant",
                    "content": None,
                    "tool_calls": [
                        {
                            "id": f"call_{i}",
                            "type": "function",
                            "function": {
                                "name": name,
                                "arguments": args
                                if isinstance(args, str)
                                else json.dumps(args),
                            },
                        }
                        for i, (name, args) in enumerate(calls)
                    ],
                },
                "finish_reason": "tool_calls",
            }
        ],
        "usage": {"prompt_tokens": usage[0], "completion_tokens": usage[1]},
    }


def openai_text_payload(text: str, usage: tuple[int, int] = (120, 30)) -> dict[str, Any]:
    """Returns a chat completion carrying only text."""
    return {
        "id": "chatcmpl-test",
        "choices": [
            {
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop",
            }
        ],
        "usage": {"prompt_tokens": usage[0], "completion_tokens": usage[1]},
    }


def model_b_arguments(
    index: int, record: DatasetRecord, use_case: UseCase
) -> dict[str, Any] | None:
    """Answers of the weaker model: no tool every seventh record, then a wrong route."""
    if index % 7 == 0:
        return None
    if index % 7 == 1:
        other = next(
            c.name
            for c in use_case.collections
            if c.name != record.ground_truth_query.collection_name
        )
        return {"collection_name": other, "search_query": "cozy"}
    return record.ground_truth_query.to_arguments()


def record_replay(
    archive: ReplayArchive, use_case: UseCase, dataset: list[DatasetRecord]
) -> None:
    """Archives answers of both test models for every record."""
    for index, record in enumerate(dataset):
        answers = (
            (MODEL_A, record.ground_truth_query.to_arguments()),
            (MODEL_B, model_b_arguments(index, record, use_case)),
        )
        for model, arguments in answers:
            payload = (
                openai_text_payload("I cannot help with that.")
                if arguments is None
                else openai_tool_payload([(TOOL_NAME, arguments)])
            )
            archive.save(
                ReplayEntry(
                    record_id=record.record_id,
                    model=model,
                    envelope="openai",
                    latency_ms=float(100 + index),
                    response=payload,
                    usage=TokenUsage(input_tokens=1000 + index, output_tokens=40),
                )
            )


def _value(collection: CollectionSchema, name: str, rng: random.Random) -> Any:
    prop = collection.get_property(name)
    assert prop is not None
    match prop.data_type:
        case DataType.NUMBER:
            return rng.randint(0, 20) / 2
        case DataType.BOOLEAN:
            return rng.random() < 0.5
        case _ if prop.searchable:
            return " ".join(rng.sample(WORDS, 3))
        case _:
            return rng.choice(NAMES)


def random_data(use_case: UseCase, rng: random.Random, max_rows: int = 200) -> Data:
    """Returns random rows for every collection, some collections empty."""
    return {
        c.name: [
            {p.name: _value(c, p.name, rng) for p in c.properties}
            for _ in range(rng.randint(0, max_rows))
        ]
        for c in use_case.collections
    }


def _existing(rows: list[Row], name: str, fallback: Any, rng: random.Random) -> Any:
    return rng.choice(rows)[name] if rows and rng.random() < 0.7 else fallback


def _text_filter(rows: list[Row], name: str, rng: random.Random) -> TextPropertyFilter:
    text = str(_existing(rows, name, rng.choice(NAMES), rng))
    operator, value = rng.choice(
        [
            (TextOperator.EQ, text),
            (TextOperator.LIKE, text[:2] + "%"),
            (TextOperator.LIKE, "%" + text[-3:]),
            (TextOperator.LIKE, "_" + text[1:]),
            (TextOperator.LIKE, "%" + rng.choice(WORDS) + "%"),
        ]
    )
    return TextPropertyFilter(property_name=name, operator=operator, value=value)


def random_query(
    use_case: UseCase, data: Data, rng: random.Random, allow_type: bool = True
) -> QueryRequest:
    """Returns a random type-correct query without search."""
    collection = rng.choice(use_case.collections)
    rows = data[collection.name]
    numbers = [p.name for p in collection.properties_of(DataType.NUMBER)]
    texts = [p.name for p in collection.properties_of(DataType.TEXT)]
    booleans = [p.name for p in collection.properties_of(DataType.BOOLEAN)]
    arguments: dict[str, Any] = {"collection_name": collection.name}

    match rng.choice(["none", "int", "text", "bool"]):
        case "int":
            name = rng.choice(numbers)
            arguments["integer_property_filter"] = IntPropertyFilter(
                property_name=name,
                operator=rng.choice(list(NumericOperator)),
                value=_existing(rows, name, rng.randint(0, 20) / 2, rng),
            )
        case "text":
            arguments["text_property_filter"] = _text_filter(rows, rng.choice(texts), rng)
        case "bool":
            arguments["boolean_property_filter"] = BooleanPropertyFilter(
                property_name=rng.choice(booleans),
                operator=rng.choice(list(BooleanOperator)),
                value=rng.random() < 0.5,
            )

    def legal(metrics: list[Any]) -> list[Any]:
        return [m for m in metrics if allow_type or m.value != "TYPE"]

    match rng.choice(["none", "int", "text", "bool"]):
        case "int":
            arguments["integer_property_aggregation"] = IntAggregation(
                property_name=rng.choice(numbers), metric=rng.choice(legal(list(IntMetric)))
            )
        case "text":
            metric = rng.choice(legal(list(TextMetric)))
            limit = (
                rng.choice([None, 1, 2, 3, 7])
                if metric == TextMetric.TOP_OCCURRENCES
                else None
            )
            arguments["text_property_aggregation"] = TextAggregation(
                property_name=rng.choice(texts), metric=metric, top_occurrences_limit=limit
            )
        case "bool":
            arguments["boolean_property_aggregation"] = BooleanAggregation(
                property_name=rng.choice(booleans),
                metric=rng.choice(legal(list(BooleanMetric))),
            )

    if rng.random() < 0.4 or len(arguments) == 1:
        plain = [p.name for p in collection.properties if not p.searchable]
        arguments["groupby_property"] = rng.choice(plain)
    return QueryRequest(**arguments)
