"""Test suite for the schema registry."""

import json
from pathlib import Path
from typing import Any

import pytest

from app.model import UseCase
from app.services.schema_registry import (
    BUILTIN_USE_CASES,
    BudgetExceeded,
    ParseError,
    PropertyProfile,
    SchemaViolation,
    collection_names,
    dump_use_case,
    load_builtin_use_case,
    load_use_case,
    load_use_case_file,
    render_description,
)


@pytest.fixture
def document(restaurants: UseCase) -> dict[str, Any]:
    """Provide the restaurant use case as a plain document."""
    return json.loads(dump_use_case(restaurants))


class TestLoadUseCase:
    """Test suite for loading use-case documents."""

    @pytest.mark.parametrize("name", BUILTIN_USE_CASES)
    def test_builtin_use_cases_follow_profile(self, name: str) -> None:
        """Test that every packaged use case has three 2/1/1 collections."""
        use_case = load_builtin_use_case(name)
        assert use_case.name == name
        assert len(use_case.collections) == 3
        for collection in use_case.collections:
            assert len(collection.properties) == 4
            assert collection.searchable_property is not None

    def test_collection_names_keep_declaration_order(self, restaurants: UseCase) -> None:
        """Test collection name listing."""
        assert collection_names(restaurants) == ["Restaurants", "Menus", "Reservations"]

    def test_dump_then_load_keeps_use_case(
        self, restaurants: UseCase, document: dict[str, Any]
    ) -> None:
        """Test that a dumped document loads to an equal use case."""
        assert load_use_case(document) == restaurants

    def test_name_falls_back_to_file_stem(
        self, tmp_path: Path, document: dict[str, Any]
    ) -> None:
        """Test files whose document carries no name."""
        del document["name"]
        path = tmp_path / "bistros.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        assert load_use_case_file(path).name == "bistros"

    def test_unknown_builtin(self) -> None:
        """Test that unknown packaged names are reported with the choices."""
        with pytest.raises(ParseError, match="restaurants"):
            load_builtin_use_case("casinos")

    def test_invalid_json(self) -> None:
        """Test malformed documents."""
        with pytest.raises(ParseError):
            load_use_case("{not json", name="broken")

    def test_invalid_identifier(self, document: dict[str, Any]) -> None:
        """Test that property names must be identifiers."""
        document["collections"][0]["properties"][0]["name"] = "bad name"
        with pytest.raises(ParseError):
            load_use_case(document)

    def test_two_searchable_properties(self, document: dict[str, Any]) -> None:
        """Test that a collection has exactly one searchable property."""
        document["collections"][0]["properties"][0]["searchable"] = True
        with pytest.raises(SchemaViolation, match="exactly one searchable"):
            load_use_case(document)

    def test_duplicate_property(self, document: dict[str, Any]) -> None:
        """Test that property names are unique within a collection."""
        properties = document["collections"][1]["properties"]
        properties[0]["name"] = properties[1]["name"]
        with pytest.raises(SchemaViolation, match="declared 2 times"):
            load_use_case(document)

    def test_wrong_collection_count(self, document: dict[str, Any]) -> None:
        """Test the number of collections."""
        document["collections"] = document["collections"][:2]
        with pytest.raises(SchemaViolation, match="expected 3 collections"):
            load_use_case(document)

    def test_custom_profile(self, document: dict[str, Any]) -> None:
        """Test that the profile is configurable."""
        profile = PropertyProfile(collections=2)
        document["collections"] = document["collections"][:2]
        assert len(load_use_case(document, profile).collections) == 2


class TestRenderDescription:
    """Test suite for render_description."""

    def test_full_description_within_budget(self, restaurants: UseCase) -> None:
        """Test that overview and property descriptions are kept."""
        text = render_description(restaurants)
        assert restaurants.use_case_overview in text
        assert "  - averageRating (NUMBER): The average customer rating from 1 to 5." in text
        assert "  - description (TEXT, searchable)" in text

    def test_descriptions_dropped_first(self, restaurants: UseCase) -> None:
        """Test truncation under a tight budget."""
        full = render_description(restaurants)
        text = render_description(restaurants, token_budget=len(full) // 4 - 1)
        assert restaurants.use_case_overview in text
        assert "customer rating" not in text
        assert "Collection: Reservations" in text

    def test_budget_exceeded(self, restaurants: UseCase) -> None:
        """Test that names and types are never dropped."""
        with pytest.raises(BudgetExceeded):
            render_description(restaurants, token_budget=64)

    def test_budget_below_minimum(self, restaurants: UseCase) -> None:
        """Test the minimum budget."""
        with pytest.raises(ValueError, match="at least"):
            render_description(restaurants, token_budget=10)
