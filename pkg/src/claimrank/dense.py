"""Exact top-k cosine retrieval over fixed-dimension embeddings.

The store is a plain float32 matrix scanned in full for every query: at the
corpus sizes this engine targets (hundreds of thousands of vectors) an exact
scan is fast enough, and exactness makes every downstream result testable
against a naive oracle. Vectors are L2-normalized at load, so similarity is a
single dot product; final ordering uses double-precision sort keys with ties
broken by ascending doc_id.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rankings import Ranking, Stage

logger = logging.getLogger(__name__)


class EmbeddingError(Exception):
    """Raised for malformed embedding files or mismatched query vectors."""


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable set of L2-normalized vectors addressable by id."""

    ids: tuple[str, ...]
    matrix: np.ndarray  # float32, shape (n, dim), rows unit-norm
    row_of: dict[str, int]

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.row_of

    def vector(self, doc_id: str) -> np.ndarray:
        try:
            return self.matrix[self.row_of[doc_id]]
        except KeyError:
            raise EmbeddingError(f"unknown id {doc_id!r}") from None

    def subset(self, keep_ids: Iterable[str]) -> "EmbeddingStore":
        """Restricted store over ``keep_ids`` (ids missing here are errors)."""
        kept = list(keep_ids)
        rows = [self.row_of[i] if i in self.row_of else -1 for i in kept]
        missing = [i for i, r in zip(kept, rows) if r < 0]
        if missing:
            raise EmbeddingError(f"ids not in store: {missing[:5]!r}")
        matrix = self.matrix[np.asarray(rows, dtype=np.intp)]
        return EmbeddingStore(tuple(kept), matrix, {i: n for n, i in enumerate(kept)})


def build_store(records: Sequence[tuple[str, Sequence[float]]]) -> EmbeddingStore:
    """Validate and normalize (id, vector) records into an EmbeddingStore."""
    ids: list[str] = []
    row_of: dict[str, int] = {}
    dim: int | None = None
    rows: list[np.ndarray] = []
    for doc_id, vec in records:
        if doc_id in row_of:
            raise EmbeddingError(f"duplicate id {doc_id!r}")
        arr = np.asarray(vec, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise EmbeddingError(f"id {doc_id!r}: vector must be a non-empty 1-d array")
        if dim is None:
            dim = int(arr.size)
        elif arr.size != dim:
            raise EmbeddingError(
                f"id {doc_id!r}: dimension mismatch (got {arr.size}, index is {dim})"
            )
        if not np.all(np.isfinite(arr)):
            raise EmbeddingError(f"id {doc_id!r}: vector contains NaN/Inf")
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if norm == 0.0:
            raise EmbeddingError(f"id {doc_id!r}: zero-norm vector cannot be normalized")
        row_of[doc_id] = len(ids)
        ids.append(doc_id)
        rows.append(arr / np.float32(norm))
    if not rows:
        raise EmbeddingError("no embedding records")
    matrix = np.vstack(rows)
    return EmbeddingStore(tuple(ids), matrix, row_of)


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Load a JSONL embedding file of {"id": str, "vec": [float, ...]} lines."""
    path = Path(path)
    records: list[tuple[str, list[float]]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "id" not in obj or "vec" not in obj:
                raise EmbeddingError(f'{path}:{lineno}: expected {{"id", "vec"}} object')
            if not isinstance(obj["vec"], list):
                raise EmbeddingError(f"{path}:{lineno}: vec must be an array of numbers")
            records.append((str(obj["id"]), obj["vec"]))
    try:
        store = build_store(records)
    except EmbeddingError as exc:
        raise EmbeddingError(f"{path}: {exc}") from None
    logger.info("loaded %d embeddings (dim=%d) from %s", len(store), store.dim, path)
    return store


def _prepare_query(store: EmbeddingStore, query_vec: Sequence[float]) -> np.ndarray:
    q = np.asarray(query_vec, dtype=np.float32).reshape(-1)
    if q.size != store.dim:
        raise EmbeddingError(
            f"query dimension {q.size} does not match index dimension {store.dim}"
        )
    if not np.all(np.isfinite(q)):
        raise EmbeddingError("query vector contains NaN/Inf")
    norm = float(np.linalg.norm(q.astype(np.float64)))
    if norm == 0.0:
        raise EmbeddingError("query vector has zero norm")
    return q / np.float32(norm)


def search(
    store: EmbeddingStore,
    query_vec: Sequence[float],
    k: int,
    query_id: str = "",
) -> Ranking:
    """Exact top-k cosine search; scores accumulate in float32, sort in float64."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = _prepare_query(store, query_vec)
    sims = store.matrix @ q
    keys = sims.astype(np.float64)
    ids_arr = np.asarray(store.ids)
    # lexsort: primary key last. Descending score, ascending doc_id on ties.
    order = np.lexsort((ids_arr, -keys))[: min(k, len(store))]
    entries = tuple((store.ids[i], float(keys[i])) for i in order)
    return Ranking(query_id, entries, Stage.DENSE)


def batch_search(
    store: EmbeddingStore,
    queries: Sequence[tuple[str, Sequence[float]]],
    k: int,
    max_workers: int = 1,
) -> list[Ranking]:
    """search() over many (query_id, vector) pairs; results match input order.

    Queries are independent, so any worker count yields identical output.
    """
    if not queries:
        return []
    if max_workers <= 1:
        return [search(store, vec, k, query_id=qid) for qid, vec in queries]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda item: search(store, item[1], k, query_id=item[0]), queries))


def write_embeddings(records: Iterable[tuple[str, Sequence[float]]], path: str | Path) -> None:
    """Write (id, vector) records in the JSONL embedding format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for doc_id, vec in records:
            fh.write(json.dumps(
                {"id": doc_id, "vec": [float(x) for x in vec]},
            ) + "\n")
