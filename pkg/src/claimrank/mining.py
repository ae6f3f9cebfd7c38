"""Hard-negative mining against a retriever and contrastive triplet export.

"Hard" means highest-scoring non-gold: negatives come from retrieval rank
order, not random sampling. Every gold positive of a post is excluded, not
just the paired one, so a second true positive never leaks in as a negative.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence
import enum

from .corpus import Corpus, RelevancePair, SelectorMode, TextSelector, select_text
from .dense import search
from .rankings import Ranking

logger = logging.getLogger(__name__)

# retriever contract: (query_text, k) -> Ranking with descending scores
Retriever = Callable[[str, int], Ranking]

QUERY_SELECTOR = TextSelector(mode=SelectorMode.TRANSLATED_WITH_FALLBACK)
DOC_SELECTOR = TextSelector(mode=SelectorMode.TRANSLATED_WITH_FALLBACK, include_title=True)


@dataclass(frozen=True)
class MiningConfig:
    negatives_per_query: int = 20
    candidate_depth: int = 100
    margin: float | None = None  # skip negatives scoring >= positive score - margin
    seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.negatives_per_query <= self.candidate_depth:
            raise ValueError(
                "negatives_per_query must satisfy 1 <= n <= candidate_depth "
                f"(got n={self.negatives_per_query}, depth={self.candidate_depth})"
            )


@dataclass(frozen=True)
class TrainingTriplet:
    query_text: str
    positive_text: str
    negative_texts: tuple[str, ...]
    # Provenance for invariant checks and audits; not exported.
    post_id: str = ""
    positive_id: str = ""
    negative_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.positive_text in self.negative_texts:
            raise ValueError(f"triplet for post {self.post_id!r}: negative equals positive")
        if len(set(self.negative_texts)) != len(self.negative_texts):
            raise ValueError(f"triplet for post {self.post_id!r}: duplicate negatives")


@dataclass
class MiningStats:
    triplets: int = 0
    exported_negatives: int = 0
    candidates_examined: int = 0
    margin_excluded: int = 0
    empty_triplets: int = 0
    posts_without_positive_score: list[str] = field(default_factory=list)

    @property
    def mean_negatives(self) -> float:
        return self.exported_negatives / self.triplets if self.triplets else 0.0

    @property
    def exclusion_rate(self) -> float:
        return self.margin_excluded / self.candidates_examined if self.candidates_examined else 0.0


def mine_negatives(
    retriever: Retriever,
    corpus: Corpus,
    pairs: Sequence[RelevancePair] | None = None,
    config: MiningConfig = MiningConfig(),
    query_selector: TextSelector = QUERY_SELECTOR,
    doc_selector: TextSelector = DOC_SELECTOR,
) -> list[TrainingTriplet]:
    triplets, stats = mine_negatives_with_stats(
        retriever, corpus, pairs, config, query_selector, doc_selector
    )
    if stats.empty_triplets:
        logger.warning("%d posts yielded no negatives at all", stats.empty_triplets)
    return triplets


def mine_negatives_with_stats(
    retriever: Retriever,
    corpus: Corpus,
    pairs: Sequence[RelevancePair] | None = None,
    config: MiningConfig = MiningConfig(),
    query_selector: TextSelector = QUERY_SELECTOR,
    doc_selector: TextSelector = DOC_SELECTOR,
) -> tuple[list[TrainingTriplet], MiningStats]:
    """One triplet per (post, positive) pair.

    Per pair: retrieve the top candidate_depth, drop every gold positive of
    the post, apply the margin filter when configured, then keep the first
    negatives_per_query survivors in retrieval order (hardest first). The
    margin filter needs the paired positive's retrieval score; when the
    positive is not among the candidates the filter is skipped for that pair
    and the post is noted in the stats.
    """
    pairs = list(corpus.pairs if pairs is None else pairs)
    gold: dict[str, set[str]] = {}
    for pair in pairs:
        gold.setdefault(pair.post_id, set()).add(pair.fact_check_id)

    stats = MiningStats()
    triplets: list[TrainingTriplet] = []
    retrieved: dict[str, Ranking] = {}
    for pair in pairs:
        post = corpus.posts[pair.post_id]
        positive = corpus.fact_checks[pair.fact_check_id]
        if post.id not in retrieved:
            query_text = select_text(post, query_selector)
            retrieved[post.id] = retriever(query_text, config.candidate_depth)
        ranking = retrieved[post.id]

        positive_score = dict(ranking.entries).get(pair.fact_check_id)
        if config.margin is not None and positive_score is None:
            stats.posts_without_positive_score.append(post.id)

        positive_text = select_text(positive, doc_selector)
        negative_ids: list[str] = []
        negative_texts: list[str] = []
        seen_texts = {positive_text}
        for doc_id, score in ranking.entries:
            if doc_id in gold[post.id]:
                continue
            stats.candidates_examined += 1
            if (
                config.margin is not None
                and positive_score is not None
                and score >= positive_score - config.margin
            ):
                stats.margin_excluded += 1
                continue
            text = select_text(corpus.fact_checks[doc_id], doc_selector)
            if text in seen_texts:
                continue
            seen_texts.add(text)
            negative_ids.append(doc_id)
            negative_texts.append(text)
            if len(negative_ids) == config.negatives_per_query:
                break

        if not negative_ids:
            stats.empty_triplets += 1
        stats.triplets += 1
        stats.exported_negatives += len(negative_ids)
        triplets.append(TrainingTriplet(
            query_text=select_text(post, query_selector),
            positive_text=positive_text,
            negative_texts=tuple(negative_texts),
            post_id=post.id,
            positive_id=positive.id,
            negative_ids=tuple(negative_ids),
        ))
    return triplets, stats


def dense_retriever(
    corpus: Corpus,
    post_store,
    doc_store,
    query_selector: TextSelector = QUERY_SELECTOR,
) -> Retriever:
    """Adapt dense search to the (query_text, k) retriever contract.

    Mining addresses queries by text, dense search by vector; this closure
    bridges them with a text -> post embedding map. Posts sharing identical
    text share one vector, which is harmless for a deterministic embedder.
    """
    text_to_vec = {
        select_text(post, query_selector): post_store.vector(post.id)
        for post in corpus.posts.values()
        if post.id in post_store.row_of
    }

    def retrieve(query_text: str, k: int) -> Ranking:
        if query_text not in text_to_vec:
            raise KeyError(f"no embedding known for query text {query_text[:60]!r}")
        return search(doc_store, text_to_vec[query_text], k)

    return retrieve


class ExportFormat(str, enum.Enum):
    JSONL_TRIPLET = "jsonl_triplet"
    JSONL_PAIR_WITH_NEGS = "jsonl_pair_with_negs"


def export_triplets(
    triplets: Sequence[TrainingTriplet],
    path: str | Path,
    format: ExportFormat = ExportFormat.JSONL_PAIR_WITH_NEGS,
) -> Path:
    """Write triplets as JSONL.

    jsonl_triplet fans out one line per (query, positive, negative);
    jsonl_pair_with_negs writes one line per query with a negatives array.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    format = ExportFormat(format)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for triplet in triplets:
            if format is ExportFormat.JSONL_TRIPLET:
                for negative in triplet.negative_texts:
                    fh.write(json.dumps({
                        "query": triplet.query_text,
                        "positive": triplet.positive_text,
                        "negative": negative,
                    }, ensure_ascii=False) + "\n")
            else:
                fh.write(json.dumps({
                    "query": triplet.query_text,
                    "positive": triplet.positive_text,
                    "negatives": list(triplet.negative_texts),
                }, ensure_ascii=False) + "\n")
    return path


def mining_sweep(
    retriever: Retriever,
    corpus: Corpus,
    pairs: Sequence[RelevancePair] | None,
    n_values: Sequence[int],
    base_config: MiningConfig = MiningConfig(),
) -> str:
    """Mine at each n and report TSV rows: n, triplets, mean_negatives, exclusion_rate."""
    if list(n_values) != sorted(n_values):
        raise ValueError("n_values must be sorted ascending")
    lines = ["n\ttriplets\tmean_negatives\texclusion_rate"]
    for n in n_values:
        config = replace(
            base_config,
            negatives_per_query=n,
            candidate_depth=max(base_config.candidate_depth, n),
        )
        _, stats = mine_negatives_with_stats(retriever, corpus, pairs, config)
        lines.append(
            f"{n}\t{stats.triplets}\t{stats.mean_negatives:.4f}\t{stats.exclusion_rate:.4f}"
        )
    return "\n".join(lines) + "\n"
