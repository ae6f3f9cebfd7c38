"""Ranking carrier shared by every retrieval stage, plus run-file serialization.

Every stage (dense, sparse, reranked, fused) emits the same ordered structure
so that fusion, evaluation, and the CLI can interoperate on files alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class Stage(str, enum.Enum):
    DENSE = "dense"
    SPARSE = "sparse"
    RERANKED = "reranked"
    FUSED = "fused"


def order_entries(entries: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    """Apply the global ordering rule: score descending, ties by ascending doc_id.

    Sort keys are coerced to float (double precision) so every stage breaks
    ties identically regardless of how scores were accumulated.
    """
    return sorted(entries, key=lambda e: (-float(e[1]), e[0]))


@dataclass(frozen=True)
class Ranking:
    """Ordered (doc_id, score) list for one query, labeled with its stage.

    ``fallback`` marks rankings that degraded to a base list (e.g. a reranker
    whose response could not be parsed); it is carried in memory and in the
    run manifest, not in run files.
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]
    stage: Stage
    fallback: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        ids = [doc_id for doc_id, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate doc_id in ranking for query {self.query_id!r}")
        ordered = order_entries(self.entries)
        if [d for d, _ in ordered] != ids:
            raise ValueError(
                f"ranking for query {self.query_id!r} violates the ordering rule "
                "(score desc, doc_id asc on ties)"
            )

    @classmethod
    def from_scores(
        cls,
        query_id: str,
        scores: Iterable[tuple[str, float]],
        stage: Stage,
        fallback: bool = False,
    ) -> "Ranking":
        """Build a Ranking from unordered (doc_id, score) pairs."""
        return cls(query_id, tuple(order_entries(scores)), stage, fallback)

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def truncate(self, k: int) -> "Ranking":
        if k < 1:
            raise ValueError("k must be >= 1")
        return Ranking(self.query_id, self.entries[:k], self.stage, self.fallback)

    def __len__(self) -> int:
        return len(self.entries)


def write_run(rankings: Sequence[Ranking], path: str | Path) -> None:
    """Write rankings as a TREC-style TSV: query_id, doc_id, rank, score, stage.

    Scores are written with ``repr`` so they round-trip exactly; re-reading a
    run file therefore reproduces the original order byte-for-byte.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for ranking in rankings:
            for rank, (doc_id, score) in enumerate(ranking.entries, start=1):
                fh.write(
                    f"{ranking.query_id}\t{doc_id}\t{rank}\t{score!r}\t{ranking.stage.value}\n"
                )


def read_run(path: str | Path) -> list[Ranking]:
    """Read a run TSV back into Rankings, grouped by query in file order."""
    path = Path(path)
    rankings: list[Ranking] = []
    current_qid: str | None = None
    current_stage: Stage | None = None
    entries: list[tuple[str, float]] = []

    def flush() -> None:
        if current_qid is not None:
            assert current_stage is not None
            rankings.append(Ranking(current_qid, tuple(entries), current_stage))

    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields")
            qid, doc_id, rank_str, score_str, stage_str = parts
            try:
                rank = int(rank_str)
                score = float(score_str)
                stage = Stage(stage_str)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if qid != current_qid:
                flush()
                current_qid, current_stage, entries = qid, stage, []
            elif stage != current_stage:
                raise ValueError(f"{path}:{lineno}: mixed stages within query {qid!r}")
            if rank != len(entries) + 1:
                raise ValueError(
                    f"{path}:{lineno}: rank {rank} out of sequence for query {qid!r}"
                )
            entries.append((doc_id, score))
    flush()
    return rankings
