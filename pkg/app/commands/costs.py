import json
from pathlib import Path
from typing import Annotated

import typer
from rich.table import Table

from app.commands.common import console, reporting
from app.dependencies import get_display_service, get_pricing
from app.model import TokenUsage
from app.services.costs import CostLedger, PricingError, PricingRegistry

DEFAULT_INPUT_TOKENS = 245_000
DEFAULT_OUTPUT_TOKENS = 140_000


def read_ledger(path: Path) -> CostLedger:
    """Reads the token totals of a ledger file written by a run.

    Raises:
        PricingError: if the file is unreadable.
    """
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        ledger = CostLedger()
        for line in data["models"]:
            ledger.record(
                line["model"],
                TokenUsage(
                    input_tokens=line["input_tokens"],
                    output_tokens=line["output_tokens"],
                ),
            )
        return ledger
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise PricingError(f"Cannot read ledger {path}: {e}") from e


def ledger_table(ledger: CostLedger, registry: PricingRegistry) -> Table:
    """Returns the priced ledger with a grand total row."""
    display_service = get_display_service()
    table = Table(
        "Model",
        "Input Tokens",
        "Output Tokens",
        "Input $/M",
        "Output $/M",
        "Total Cost",
        "Note",
    )
    for line in ledger.lines(registry):
        pricing = registry.find(line.model)
        table.add_row(
            pricing.display_name if pricing else line.model,
            display_service.format_tokens(line.input_tokens),
            display_service.format_tokens(line.output_tokens),
            str(line.input_per_million) if line.priced else "-",
            str(line.output_per_million) if line.priced else "-",
            display_service.format_money(line.total_cost),
            line.note or "",
        )
    table.add_row(
        "Total", "", "", "", "", display_service.format_money(ledger.grand_total(registry))
    )
    return table


def costs(
    model: Annotated[
        list[str] | None,
        typer.Option("--model", help="Model to price; repeatable. Defaults to all."),
    ] = None,
    input_tokens: Annotated[
        int, typer.Option("--input-tokens", min=0, help="Input tokens per model.")
    ] = DEFAULT_INPUT_TOKENS,
    output_tokens: Annotated[
        int, typer.Option("--output-tokens", min=0, help="Output tokens per model.")
    ] = DEFAULT_OUTPUT_TOKENS,
    ledger: Annotated[
        Path | None,
        typer.Option(
            "--ledger",
            dir_okay=False,
            help="Price the totals of a ledger.json instead.",
        ),
    ] = None,
) -> None:
    """Print what a benchmark run costs per model."""
    with reporting():
        registry = get_pricing()
        if ledger is not None:
            totals = read_ledger(ledger)
        else:
            totals = CostLedger()
            usage = TokenUsage(input_tokens=input_tokens, output_tokens=output_tokens)
            for name in model or list(registry.models):
                registry.get(name)
                totals.record(name, usage)
        console.print(ledger_table(totals, registry))
