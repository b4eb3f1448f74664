"""Helpers that handle free text."""

import math
import re

_TOKEN_PATTERN = re.compile(r"\w+")
_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def collapse_whitespace(text: str) -> str:
    """Returns the text with runs of whitespace collapsed and ends trimmed.

    Args:
        text (str): text to normalize.

    Returns:
        str: normalized text.
    """
    return " ".join(text.split())


def tokenize(text: str) -> list[str]:
    """Splits text into case-folded word tokens.

    Punctuation and whitespace separate tokens.

    Args:
        text (str): text to split.

    Returns:
        list[str]: tokens in order of appearance.
    """
    return _TOKEN_PATTERN.findall(text.casefold())


def estimate_tokens(text: str) -> int:
    """Estimates the model token count of a text as ceil(characters / 4).

    Args:
        text (str): text to measure.

    Returns:
        int: estimated token count.
    """
    return math.ceil(len(text) / 4)


def humanize(identifier: str) -> str:
    """Turns a camel-case identifier into lower-case words.

    Args:
        identifier (str): identifier such as ``averageRating``.

    Returns:
        str: words such as ``average rating``.
    """
    words = _CAMEL_BOUNDARY.sub(" ", identifier).replace("_", " ")
    return collapse_whitespace(words).lower()


def format_number(value: float) -> str:
    """Formats a number without a trailing ``.0`` for integral values."""
    if math.isfinite(value) and value == int(value):
        return str(int(value))
    return repr(value)
