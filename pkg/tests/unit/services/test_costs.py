"""Test suite for pricing and cost accounting."""

from decimal import Decimal
from pathlib import Path

import pytest

from app.model import TokenUsage
from app.services.costs import (
    CostLedger,
    PricingError,
    PricingRegistry,
    compute_cost,
    cost_line,
    load_pricing,
)

RUN_USAGE = TokenUsage(input_tokens=245_000, output_tokens=140_000)


@pytest.fixture
def registry() -> PricingRegistry:
    """Provide the packaged price list."""
    return load_pricing()


class TestComputeCost:
    """Test suite for compute_cost."""

    def test_rounds_half_up_to_cents(self) -> None:
        """Test that half a cent rounds up."""
        assert compute_cost(245_000, Decimal("3.00")) == Decimal("0.74")

    def test_zero_tokens(self) -> None:
        """Test a run without tokens."""
        assert compute_cost(0, Decimal("15.00")) == Decimal("0.00")


class TestPricingRegistry:
    """Test suite for the packaged price list."""

    @pytest.mark.parametrize(
        "model,expected",
        [
            ("claude-3-5-sonnet", "2.84"),
            ("gpt-4o", "2.01"),
            ("command-r-plus", "2.01"),
            ("gemini-1.5-pro", "1.01"),
            ("gpt-4o-mini", "0.12"),
            ("llama-3.1-8b-instruct", "0.03"),
            ("gemini-1.5-flash", "0.06"),
            ("command-r7b", "0.03"),
        ],
        ids=["claude", "gpt4o", "command_r_plus", "gemini_pro", "mini", "llama", "flash", "r7b"],
    )
    def test_benchmark_run_costs(
        self, registry: PricingRegistry, model: str, expected: str
    ) -> None:
        """Test the cost of one full run per model."""
        assert cost_line(model, RUN_USAGE, registry.get(model)).total_cost == Decimal(expected)

    def test_dataset_generation_cost(self, registry: PricingRegistry) -> None:
        """Test the cost of generating a dataset with GPT-4o."""
        usage = TokenUsage(input_tokens=413_516, output_tokens=86_457)
        line = cost_line("gpt-4o", usage, registry.get("gpt-4o"))
        assert (line.input_cost, line.output_cost, line.total_cost) == (
            Decimal("1.03"),
            Decimal("0.86"),
            Decimal("1.89"),
        )

    def test_lookup_by_display_name(self, registry: PricingRegistry) -> None:
        """Test that display names resolve too."""
        assert registry.get("Command R+") == registry.get("command-r-plus")

    def test_substituted_price_carries_a_note(self, registry: PricingRegistry) -> None:
        """Test the flagged Gemini 2.0 Flash price."""
        line = cost_line("gemini-2.0-flash-exp", RUN_USAGE, registry.get("gemini-2.0-flash-exp"))
        assert line.total_cost == Decimal("0.06")
        assert line.note is not None and "1.5 Flash" in line.note

    def test_unknown_model(self, registry: PricingRegistry) -> None:
        """Test that an unknown model is an error."""
        with pytest.raises(PricingError, match="no-such-model"):
            registry.get("no-such-model")

    def test_invalid_file(self, tmp_path: Path) -> None:
        """Test that negative prices are refused."""
        path = tmp_path / "pricing.yaml"
        path.write_text(
            "models:\n  m:\n    display_name: M\n    input_per_million: -1\n    output_per_million: 1\n",
            encoding="utf-8",
        )
        with pytest.raises(PricingError):
            load_pricing(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        """Test that a missing file is reported as a pricing error."""
        with pytest.raises(PricingError):
            load_pricing(tmp_path / "absent.yaml")


class TestCostLedger:
    """Test suite for CostLedger."""

    def test_records_accumulate(self, registry: PricingRegistry) -> None:
        """Test totals per model across records."""
        ledger = CostLedger()
        ledger.record("gpt-4o", TokenUsage(input_tokens=200_000, output_tokens=100_000))
        ledger.record("gpt-4o", TokenUsage(input_tokens=45_000, output_tokens=40_000))
        assert ledger.usage() == {"gpt-4o": RUN_USAGE}
        assert ledger.grand_total(registry) == Decimal("2.01")

    def test_merge(self, registry: PricingRegistry) -> None:
        """Test that merging adds every model."""
        first, second = CostLedger(), CostLedger()
        first.record("gpt-4o", RUN_USAGE)
        second.record("gpt-4o-mini", RUN_USAGE)
        second.record("gpt-4o", TokenUsage(input_tokens=1))
        first.merge(second)
        assert list(first.usage()) == ["gpt-4o", "gpt-4o-mini"]
        assert first.usage()["gpt-4o"].input_tokens == 245_001
        assert first.grand_total(registry) == Decimal("2.13")

    def test_unpriced_models_cost_nothing(self, registry: PricingRegistry) -> None:
        """Test that unknown models are listed without price."""
        ledger = CostLedger()
        ledger.record("model-a", RUN_USAGE)
        (line,) = ledger.lines(registry)
        assert not line.priced
        assert line.total_cost == Decimal("0.00")
        assert line.note == "no pricing known"

    def test_to_dict(self, registry: PricingRegistry) -> None:
        """Test the JSON view of a ledger."""
        ledger = CostLedger()
        ledger.record("claude-3-5-sonnet", RUN_USAGE)
        data = ledger.to_dict(registry)
        assert data["grand_total"] == "2.84"
        assert data["models"][0]["input_tokens"] == 245_000  # type: ignore[index]
