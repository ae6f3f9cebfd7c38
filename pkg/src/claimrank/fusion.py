"""Reciprocal Rank Fusion of two or more rankings for the same query.

fused_score(d) = sum over input lists i containing d of w_i / (k_rrf + rank_i(d)),
with 1-based ranks. Documents absent from a list simply contribute nothing
from it, which keeps single-list fusion order-preserving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .rankings import Ranking, Stage

DEFAULT_K_RRF = 60.0


@dataclass(frozen=True)
class RrfConfig:
    k_rrf: float = DEFAULT_K_RRF
    input_weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.k_rrf <= 0:
            raise ValueError("k_rrf must be positive")
        if self.input_weights is not None and any(w <= 0 for w in self.input_weights):
            raise ValueError("input weights must be positive")


def rrf_fuse(rankings: Sequence[Ranking], config: RrfConfig = RrfConfig()) -> Ranking:
    """Fuse rankings into one Ranking(stage=fused) over the union of doc ids."""
    if not rankings:
        raise ValueError("rrf_fuse requires at least one input ranking")
    if config.input_weights is not None and len(config.input_weights) != len(rankings):
        raise ValueError(
            f"{len(config.input_weights)} weights for {len(rankings)} rankings"
        )
    query_ids = {r.query_id for r in rankings}
    if len(query_ids) != 1:
        raise ValueError(f"cannot fuse rankings for different queries: {sorted(query_ids)!r}")
    weights = config.input_weights or (1.0,) * len(rankings)

    # Correctly-rounded summation (fsum) makes the fused score independent of
    # input-list order, so permuting rankings permutes nothing downstream.
    contributions: dict[str, list[float]] = {}
    for ranking, weight in zip(rankings, weights):
        for rank, (doc_id, _) in enumerate(ranking.entries, start=1):
            contributions.setdefault(doc_id, []).append(weight / (config.k_rrf + rank))
    scores = {doc_id: math.fsum(terms) for doc_id, terms in contributions.items()}
    return Ranking.from_scores(rankings[0].query_id, scores.items(), Stage.FUSED)
