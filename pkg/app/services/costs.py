"""Model pricing and token cost accounting."""

from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, ValidationError

from app import APP_PATH
from app.model import TokenUsage

PRICING_PATH = APP_PATH / "data" / "pricing.yaml"
CENT = Decimal("0.01")
ONE_MILLION = Decimal(1_000_000)


class PricingError(Exception):
    """Raised when pricing data is missing or malformed."""


class ModelPricing(BaseModel):
    """Price of a model in USD per one million tokens."""

    model_config = ConfigDict(frozen=True)

    display_name: str
    input_per_million: Decimal = Field(ge=0)
    output_per_million: Decimal = Field(ge=0)
    note: str | None = None


class PricingRegistry(BaseModel):
    """Known model prices keyed by model id."""

    models: dict[str, ModelPricing] = Field(default_factory=dict)

    def find(self, model: str) -> ModelPricing | None:
        """Returns the pricing of a model id or display name, if known."""
        if model in self.models:
            return self.models[model]
        return next(
            (p for p in self.models.values() if p.display_name == model), None
        )

    def get(self, model: str) -> ModelPricing:
        """Returns the pricing of a model.

        Raises:
            PricingError: if the model is unknown.
        """
        pricing = self.find(model)
        if pricing is None:
            raise PricingError(
                f"No pricing for model '{model}', known: {', '.join(self.models)}"
            )
        return pricing


def load_pricing(path: Path = PRICING_PATH) -> PricingRegistry:
    """Loads a pricing registry from YAML.

    Args:
        path (Path, optional): registry file. Defaults to the packaged registry.

    Raises:
        PricingError: if the file cannot be read or validated.

    Returns:
        PricingRegistry: the registry.
    """
    try:
        with path.open(encoding="utf-8") as stream:
            data = yaml.safe_load(stream)
        return PricingRegistry.model_validate(data or {})
    except (OSError, yaml.YAMLError, ValidationError) as e:
        raise PricingError(f"Cannot load pricing from {path}: {e}") from e


def compute_cost(tokens: int, price_per_million: Decimal) -> Decimal:
    """Returns the cost of tokens rounded half-up to cents."""
    raw = Decimal(tokens) * price_per_million / ONE_MILLION
    return raw.quantize(CENT, rounding=ROUND_HALF_UP)


class CostLine(BaseModel):
    """Token totals and costs of one model."""

    model_config = ConfigDict(frozen=True)

    model: str
    input_tokens: NonNegativeInt
    output_tokens: NonNegativeInt
    input_cost: Decimal
    output_cost: Decimal
    total_cost: Decimal
    input_per_million: Decimal | None = None
    output_per_million: Decimal | None = None
    note: str | None = None

    @property
    def priced(self) -> bool:
        """Returns True if the model had a known price."""
        return self.input_per_million is not None


def cost_line(model: str, usage: TokenUsage, pricing: ModelPricing | None) -> CostLine:
    """Prices the token usage of a model.

    Args:
        model (str): model id.
        usage (TokenUsage): token totals.
        pricing (ModelPricing | None): price, or None for unpriced models.

    Returns:
        CostLine: the priced line; unpriced models cost nothing.
    """
    if pricing is None:
        zero = Decimal("0.00")
        return CostLine(
            model=model,
            input_tokens=usage.input_tokens,
            output_tokens=usage.output_tokens,
            input_cost=zero,
            output_cost=zero,
            total_cost=zero,
            note="no pricing known",
        )
    input_cost = compute_cost(usage.input_tokens, pricing.input_per_million)
    output_cost = compute_cost(usage.output_tokens, pricing.output_per_million)
    return CostLine(
        model=model,
        input_tokens=usage.input_tokens,
        output_tokens=usage.output_tokens,
        input_cost=input_cost,
        output_cost=output_cost,
        total_cost=input_cost + output_cost,
        input_per_million=pricing.input_per_million,
        output_per_million=pricing.output_per_million,
        note=pricing.note,
    )


class CostLedger:
    """Accumulates provider-reported token usage per model."""

    def __init__(self) -> None:
        """Initialize an empty ledger."""
        self._usage: dict[str, TokenUsage] = {}

    def record(self, model: str, usage: TokenUsage) -> None:
        """Adds usage to a model's totals."""
        self._usage[model] = self._usage.get(model, TokenUsage()) + usage

    def merge(self, other: "CostLedger") -> None:
        """Adds every total of another ledger."""
        for model, usage in other.usage().items():
            self.record(model, usage)

    def usage(self) -> dict[str, TokenUsage]:
        """Returns the totals per model."""
        return dict(self._usage)

    def lines(self, registry: PricingRegistry) -> list[CostLine]:
        """Prices every model in insertion order."""
        return [
            cost_line(model, usage, registry.find(model))
            for model, usage in self._usage.items()
        ]

    def grand_total(self, registry: PricingRegistry) -> Decimal:
        """Returns the sum of all model totals."""
        return sum((line.total_cost for line in self.lines(registry)), Decimal("0.00"))

    def to_dict(self, registry: PricingRegistry) -> dict[str, object]:
        """Returns a JSON-ready view of the ledger."""
        return {
            "models": [line.model_dump(mode="json") for line in self.lines(registry)],
            "grand_total": str(self.grand_total(registry)),
        }
