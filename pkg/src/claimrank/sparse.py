"""Okapi BM25 retrieval over an in-memory inverted index.

One tokenizer for everything: Unicode word characters (minus underscore),
lowercased, no stemming, no stopword removal. Hyphens and punctuation split;
digits are kept. This is adequate for English (and translated) text; running
it on unsegmented scripts such as Thai degrades to long tokens, which is a
documented limitation of the lexical route.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .rankings import Ranking, Stage, order_entries

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


class SparseIndexError(Exception):
    pass


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]  # term -> [(doc_id, tf), ...]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int


def build_index(docs: Sequence[tuple[str, str]]) -> InvertedIndex:
    """Index (doc_id, text) pairs; ids must be unique and the list non-empty."""
    if not docs:
        raise SparseIndexError("cannot build an index from an empty document list")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc_id, text in docs:
        if doc_id in doc_lengths:
            raise SparseIndexError(f"duplicate doc_id {doc_id!r}")
        terms = tokenize(text)
        doc_lengths[doc_id] = len(terms)
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((doc_id, tf))
    avg = sum(doc_lengths.values()) / len(doc_lengths)
    return InvertedIndex(postings, doc_lengths, avg, len(doc_lengths))


def idf(index: InvertedIndex, term: str) -> float:
    """Nonnegative Lucene-style IDF: ln(1 + (N - df + 0.5) / (df + 0.5))."""
    df = len(index.postings.get(term, ()))
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def bm25_search(
    index: InvertedIndex,
    query: str,
    k: int,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    query_id: str = "",
) -> Ranking:
    """Okapi BM25 over the index; zero-score documents are omitted.

    Repeated query terms contribute once per occurrence. With the ln(1 + x)
    IDF every matching document scores strictly positive, so fusion never
    sees negative sparse scores.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[str, float] = {}
    for term in tokenize(query):
        postings = index.postings.get(term)
        if not postings:
            continue
        term_idf = idf(index, term)
        for doc_id, tf in postings:
            length_norm = k1 * (1.0 - b + b * index.doc_lengths[doc_id] / index.avg_doc_length)
            scores[doc_id] = scores.get(doc_id, 0.0) + term_idf * tf * (k1 + 1.0) / (tf + length_norm)
    entries = tuple(order_entries(scores.items())[:k])
    return Ranking(query_id, entries, Stage.SPARSE)
