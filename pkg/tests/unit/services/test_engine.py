"""Test suite for the query engine."""

import random
from typing import Any

import pytest

from app.model import (
    BooleanMetric,
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
    UseCase,
)
from app.services.engine import (
    AggregateKind,
    AggregateValue,
    EmptyAggregate,
    GroupedResult,
    ObjectResults,
    QueryEngine,
    RowViolation,
    TopOccurrences,
    aggregate,
    eval_filter,
    like_pattern,
)
from app.services.queries import validate
from tests.unit.factories import random_data, random_query
from tests.unit.oracle import EMPTY, assert_same, brute_force, normalize


def menu(item: str, price: float, vegetarian: bool = False, text: str = "") -> dict[str, Any]:
    """Returns one row of the Menus collection."""
    return {
        "menuItem": item,
        "itemDescription": text or f"{item} plate",
        "price": price,
        "isVegetarian": vegetarian,
    }


@pytest.fixture
def menu_data() -> dict[str, list[dict[str, Any]]]:
    """Provide a small menu with repeated items and prices."""
    return {
        "Restaurants": [],
        "Reservations": [],
        "Menus": [
            menu("Pasta", 12, True, "fresh pasta with basil"),
            menu("Pizza", 15, True, "wood fired pizza"),
            menu("Steak", 32, False, "grilled steak with pepper sauce"),
            menu("Pasta", 14, True, "pasta with spicy tomato"),
            menu("Salad", 9, True, "garden salad"),
            menu("Burger", 15, False, "beef burger"),
        ],
    }


@pytest.fixture
def engine(restaurants: UseCase, menu_data: dict[str, list[dict[str, Any]]]) -> QueryEngine:
    """Provide an engine over the small menu."""
    return QueryEngine(restaurants, menu_data)


def run(engine: QueryEngine, use_case: UseCase, **arguments: Any) -> Any:
    """Validates and executes a query built from keyword arguments."""
    return engine.execute(validate(QueryRequest(**arguments), use_case))


class TestLikePattern:
    """Test suite for LIKE pattern matching."""

    @pytest.mark.parametrize(
        "pattern,value,expected",
        [
            ("Pa%", "Pasta", True),
            ("%ta", "Pasta", True),
            ("_asta", "Pasta", True),
            ("_asta", "PPasta", False),
            ("pasta", "Pasta", False),
            ("50.0%", "50.0% off", True),
            ("50.0%", "5000 off", False),
            ("%", "", True),
        ],
        ids=[
            "prefix",
            "suffix",
            "single_wildcard",
            "single_wildcard_one_char_only",
            "case_sensitive",
            "regex_characters_escaped",
            "dot_is_literal",
            "empty_value",
        ],
    )
    def test_matches_like_semantics(self, pattern: str, value: str, expected: bool) -> None:
        """Test that % and _ are the only wildcards."""
        assert (like_pattern(pattern).fullmatch(value) is not None) is expected


class TestEvalFilter:
    """Test suite for eval_filter."""

    def test_numeric_filter_compares_floats(self) -> None:
        """Test integer filters against float values."""
        row = menu("Pasta", 12)
        f = IntPropertyFilter(property_name="price", operator=NumericOperator.LE, value=12)
        assert eval_filter(row, f)

    def test_text_equality_is_exact(self) -> None:
        """Test that text equality does not trim or fold case."""
        row = menu("Pasta", 12)
        f = TextPropertyFilter(property_name="menuItem", operator=TextOperator.EQ, value="pasta")
        assert not eval_filter(row, f)


class TestAggregate:
    """Test suite for the aggregate function."""

    def test_median_of_even_count_is_mean_of_middle_values(self) -> None:
        """Test MEDIAN over an even number of values."""
        result = aggregate([4.0, 1.0, 3.0, 2.0], IntMetric.MEDIAN, DataType.NUMBER)
        assert result == AggregateValue(kind=AggregateKind.NUMBER, value=2.5)

    def test_mode_takes_smallest_value_among_ties(self) -> None:
        """Test MODE tie-breaking."""
        result = aggregate([3.0, 1.0, 3.0, 1.0, 2.0], IntMetric.MODE, DataType.NUMBER)
        assert isinstance(result, AggregateValue)
        assert result.value == 1.0

    def test_top_occurrences_break_ties_by_value(self) -> None:
        """Test TOP_OCCURRENCES ordering and limit."""
        result = aggregate(
            ["b", "a", "c", "b", "a", "d"], TextMetric.TOP_OCCURRENCES, DataType.TEXT, 3
        )
        assert isinstance(result, TopOccurrences)
        assert [(o.value, o.count) for o in result.occurrences] == [
            ("a", 2),
            ("b", 2),
            ("c", 1),
        ]

    def test_type_reports_declared_data_type(self) -> None:
        """Test that TYPE does not look at the values."""
        result = aggregate([], BooleanMetric.TYPE, DataType.BOOLEAN)
        assert result == AggregateValue(kind=AggregateKind.TEXT, value="BOOLEAN")

    @pytest.mark.parametrize(
        "metric,expected",
        [
            (IntMetric.COUNT, 0),
            (IntMetric.SUM, 0),
            (BooleanMetric.TOTAL_TRUE, 0),
            (BooleanMetric.PERCENTAGE_FALSE, 0),
        ],
        ids=["count", "sum", "total_true", "percentage_false"],
    )
    def test_total_metrics_are_zero_over_no_rows(self, metric: Any, expected: float) -> None:
        """Test metrics defined over zero rows."""
        result = aggregate([], metric, DataType.NUMBER)
        assert isinstance(result, AggregateValue)
        assert result.value == expected

    @pytest.mark.parametrize(
        "metric",
        [IntMetric.MIN, IntMetric.MAX, IntMetric.MEAN, IntMetric.MEDIAN, IntMetric.MODE],
        ids=["min", "max", "mean", "median", "mode"],
    )
    def test_undefined_metrics_raise_over_no_rows(self, metric: IntMetric) -> None:
        """Test that EmptyAggregate is raised instead of inventing a value."""
        with pytest.raises(EmptyAggregate):
            aggregate([], metric, DataType.NUMBER)

    def test_percentage_true(self) -> None:
        """Test PERCENTAGE_TRUE over mixed values."""
        result = aggregate([True, False, True, True], BooleanMetric.PERCENTAGE_TRUE, DataType.BOOLEAN)
        assert result == AggregateValue(kind=AggregateKind.PERCENTAGE, value=75.0)


class TestQueryEngine:
    """Test suite for QueryEngine.execute."""

    def test_filter_only_returns_rows_in_insertion_order(
        self, engine: QueryEngine, restaurants: UseCase
    ) -> None:
        """Test a plain filter query."""
        result = run(
            engine,
            restaurants,
            collection_name="Menus",
            integer_property_filter=IntPropertyFilter(
                property_name="price", operator=NumericOperator.LT, value=15
            ),
        )
        assert isinstance(result, ObjectResults)
        assert [r["price"] for r in result.rows] == [12, 14, 9]

    def test_search_ranks_only_rows_that_pass_the_filter(
        self, engine: QueryEngine, restaurants: UseCase
    ) -> None:
        """Test that filtering happens before ranking."""
        result = run(
            engine,
            restaurants,
            collection_name="Menus",
            search_query="pasta",
            integer_property_filter=IntPropertyFilter(
                property_name="price", operator=NumericOperator.GT, value=13
            ),
        )
        assert isinstance(result, ObjectResults)
        assert [r["price"] for r in result.rows] == [14]

    def test_search_without_matching_terms_returns_nothing(
        self, engine: QueryEngine, restaurants: UseCase
    ) -> None:
        """Test that rows sharing no term with the query are dropped."""
        result = run(engine, restaurants, collection_name="Menus", search_query="sushi")
        assert result == ObjectResults(rows=())

    def test_search_results_are_capped(self, restaurants: UseCase) -> None:
        """Test the default limit of ten ranked rows."""
        data = {
            "Restaurants": [],
            "Reservations": [],
            "Menus": [menu(f"Dish {i}", i, text="pasta") for i in range(25)],
        }
        result = run(QueryEngine(restaurants, data), restaurants, collection_name="Menus", search_query="pasta")
        assert isinstance(result, ObjectResults)
        assert len(result.rows) == 10

    def test_aggregation_runs_over_ranked_rows(
        self, engine: QueryEngine, restaurants: UseCase
    ) -> None:
        """Test search combined with an aggregation."""
        result = run(
            engine,
            restaurants,
            collection_name="Menus",
            search_query="pasta",
            integer_property_aggregation=IntAggregation(property_name="price", metric=IntMetric.SUM),
        )
        assert result == AggregateValue(kind=AggregateKind.NUMBER, value=26.0)

    def test_groups_are_ordered_by_key(
        self, engine: QueryEngine, restaurants: UseCase
    ) -> None:
        """Test grouping with a count per group."""
        result = run(
            engine,
            restaurants,
            collection_name="Menus",
            text_property_aggregation=TextAggregation(property_name="menuItem", metric=TextMetric.COUNT),
            groupby_property="isVegetarian",
        )
        assert isinstance(result, GroupedResult)
        assert [(g.key, g.result.value) for g in result.groups] == [(False, 2), (True, 4)]  # type: ignore[union-attr]

    def test_top_occurrences_limit_from_query(
        self, engine: QueryEngine, restaurants: UseCase
    ) -> None:
        """Test that the query's limit wins over the configured default."""
        result = run(
            engine,
            restaurants,
            collection_name="Menus",
            text_property_aggregation=TextAggregation(
                property_name="menuItem",
                metric=TextMetric.TOP_OCCURRENCES,
                top_occurrences_limit=1,
            ),
        )
        assert result == TopOccurrences.model_validate(
            {"occurrences": [{"value": "Pasta", "count": 2}]}
        )

    def test_empty_selection_raises_for_undefined_metric(
        self, engine: QueryEngine, restaurants: UseCase
    ) -> None:
        """Test EmptyAggregate when no row passes the filter."""
        with pytest.raises(EmptyAggregate):
            run(
                engine,
                restaurants,
                collection_name="Menus",
                integer_property_filter=IntPropertyFilter(
                    property_name="price", operator=NumericOperator.GT, value=100
                ),
                integer_property_aggregation=IntAggregation(property_name="price", metric=IntMetric.MAX),
            )

    def test_rows_must_conform_to_schema(self, restaurants: UseCase) -> None:
        """Test that mistyped seeded rows are rejected."""
        bad = menu("Pasta", 12)
        bad["price"] = "twelve"
        with pytest.raises(RowViolation, match="price"):
            QueryEngine(restaurants, {"Restaurants": [], "Reservations": [], "Menus": [bad]})

    def test_every_collection_needs_rows(self, restaurants: UseCase) -> None:
        """Test that a missing collection is rejected."""
        with pytest.raises(RowViolation, match="Reservations"):
            QueryEngine(restaurants, {"Restaurants": [], "Menus": []})


class TestAgainstBruteForce:
    """Random queries checked against an independent row scan."""

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_brute_force(self, restaurants: UseCase, seed: int) -> None:
        """Test twenty random queries over one random dataset."""
        rng = random.Random(seed)
        data = random_data(restaurants, rng)
        engine = QueryEngine(restaurants, data)
        for _ in range(20):
            query = random_query(restaurants, data, rng)
            expected = brute_force(query, restaurants, data)
            validated = validate(query, restaurants)
            if expected == EMPTY:
                with pytest.raises(EmptyAggregate):
                    engine.execute(validated)
            else:
                assert_same(normalize(engine.execute(validated)), expected, query.model_dump_json())
