import json
from decimal import Decimal

from app.model import PredictionOutcome, QueryRequest


def _fixed(value: float, digits: int) -> str:
    return f"{value:.{digits}f}"


class DisplayService:
    """Utility service for formatting scores, money and queries.

    Provides static methods for consistent formatting across the markdown,
    delimiter-separated, HTML and console reports.
    """

    @staticmethod
    def format_percent(value: float | None) -> str:
        """Format a percentage with two decimals.

        Args:
            value (float | None): The percentage in [0, 100], or None.

        Returns:
            str: Formatted value like "74.29" or "-" if None.
        """
        if value is None:
            return "-"
        return _fixed(value, 2)

    @staticmethod
    def format_score(value: float | None) -> str:
        """Format an AST score with three decimals.

        Args:
            value (float | None): The score in [0, 1], or None.

        Returns:
            str: Formatted score like "0.973" or "-" if None.
        """
        if value is None:
            return "-"
        return _fixed(value, 3)

    @staticmethod
    def format_money(value: Decimal) -> str:
        """Format an amount of US dollars.

        Args:
            value (Decimal): The amount, already rounded to cents.

        Returns:
            str: Amount like "$2.84".
        """
        return f"${value:,.2f}"

    @staticmethod
    def format_tokens(count: int) -> str:
        """Format a token count with thousands separators."""
        return f"{count:,}"

    @staticmethod
    def format_query(query: QueryRequest | None) -> str:
        """Format a query as compact JSON with absent arguments omitted.

        Args:
            query (QueryRequest | None): The query, or None.

        Returns:
            str: JSON text or empty string if None.
        """
        if query is None:
            return ""
        return json.dumps(query.to_arguments(), separators=(", ", ": "))

    @staticmethod
    def format_prediction(outcome: PredictionOutcome | None) -> str:
        """Format what a model answered.

        Tool calls show their queries, other outcomes their kind and text.
        """
        if outcome is None:
            return ""
        if outcome.queries:
            return " | ".join(DisplayService.format_query(q) for q in outcome.queries)
        detail = outcome.response_text or "; ".join(outcome.diagnostics)
        return f"{outcome.kind}: {detail}" if detail else str(outcome.kind)
