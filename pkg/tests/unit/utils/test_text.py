"""Test suite for free-text helpers."""

import pytest

from app.utils.text import collapse_whitespace, estimate_tokens, format_number, humanize, tokenize


class TestTokenize:
    """Test suite for tokenize."""

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("Cozy Pasta", ["cozy", "pasta"]),
            ("wood-fired, spicy!", ["wood", "fired", "spicy"]),
            ("  ", []),
            ("Straße", ["strasse"]),
        ],
        ids=["case_folded", "punctuation_splits", "blank", "full_case_folding"],
    )
    def test_tokenize(self, text: str, expected: list[str]) -> None:
        """Test word splitting."""
        assert tokenize(text) == expected


class TestFormatting:
    """Test suite for the formatting helpers."""

    def test_collapse_whitespace(self) -> None:
        """Test trimming and collapsing."""
        assert collapse_whitespace("  cozy \n\t pasta ") == "cozy pasta"

    @pytest.mark.parametrize(
        "identifier,expected",
        [("averageRating", "average rating"), ("is_open", "is open"), ("price", "price")],
        ids=["camel_case", "snake_case", "single_word"],
    )
    def test_humanize(self, identifier: str, expected: str) -> None:
        """Test identifiers turned into words."""
        assert humanize(identifier) == expected

    @pytest.mark.parametrize(
        "value,expected",
        [(20.0, "20"), (4.5, "4.5"), (-3.0, "-3"), (float("inf"), "inf")],
        ids=["integral", "fraction", "negative", "infinite"],
    )
    def test_format_number(self, value: float, expected: str) -> None:
        """Test numbers without a trailing .0."""
        assert format_number(value) == expected

    def test_estimate_tokens(self) -> None:
        """Test the four characters per token estimate."""
        assert estimate_tokens("") == 0
        assert estimate_tokens("abcde") == 2
