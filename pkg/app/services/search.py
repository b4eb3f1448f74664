"""Lexical relevance ranking over the searchable property of a collection."""

import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence

from pydantic import BaseModel, Field, PositiveInt

from app.utils.text import tokenize


class SearchConfiguration(BaseModel):
    """Parameters of the ranking function."""

    k1: float = Field(default=1.5, ge=0)
    b: float = Field(default=0.75, ge=0, le=1)
    limit: PositiveInt = 10


class InvertedIndex:
    """BM25 index over documents identified by their insertion position."""

    def __init__(self, documents: Iterable[str], config: SearchConfiguration) -> None:
        """Index the documents.

        Args:
            documents (Iterable[str]): document texts in insertion order.
            config (SearchConfiguration): ranking parameters.
        """
        self.config = config
        self._postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        self._lengths: list[int] = []

        for position, text in enumerate(documents):
            tokens = tokenize(text)
            self._lengths.append(len(tokens))
            for term, frequency in Counter(tokens).items():
                self._postings[term].append((position, frequency))

        self._average_length = (
            sum(self._lengths) / len(self._lengths) if self._lengths else 0.0
        )

    def __len__(self) -> int:
        """Returns the number of indexed documents."""
        return len(self._lengths)

    def idf(self, term: str) -> float:
        """Returns the inverse document frequency of a term."""
        df = len(self._postings.get(term, ()))
        n = len(self._lengths)
        return math.log(1 + (n - df + 0.5) / (df + 0.5))

    def scores(self, query: str) -> dict[int, float]:
        """Scores every document sharing at least one term with the query.

        Args:
            query (str): query text.

        Returns:
            dict[int, float]: positive scores keyed by document position.
        """
        k1, b = self.config.k1, self.config.b
        scores: dict[int, float] = defaultdict(float)
        for term in tokenize(query):
            postings = self._postings.get(term)
            if not postings:
                continue
            idf = self.idf(term)
            for position, tf in postings:
                norm = 1 - b + b * self._lengths[position] / self._average_length
                scores[position] += idf * tf * (k1 + 1) / (tf + k1 * norm)
        return {position: score for position, score in scores.items() if score > 0}

    def rank(
        self,
        query: str,
        candidates: Sequence[int] | None = None,
        limit: int | None = None,
    ) -> list[int]:
        """Ranks documents by relevance to the query.

        Ties keep insertion order. A query without terms keeps all candidates
        in insertion order.

        Args:
            query (str): query text.
            candidates (Sequence[int] | None, optional): positions allowed in the
                result. Defaults to all documents.
            limit (int | None, optional): maximum number of results. Defaults to
                the configured limit.

        Returns:
            list[int]: document positions, most relevant first.
        """
        limit = limit or self.config.limit
        allowed = list(range(len(self))) if candidates is None else list(candidates)

        if not tokenize(query):
            return allowed[:limit]

        scores = self.scores(query)
        matched = [position for position in allowed if position in scores]
        matched.sort(key=lambda position: (-scores[position], position))
        return matched[:limit]
