import json

import numpy as np
import pytest

from claimrank.dense import (
    EmbeddingError,
    batch_search,
    build_store,
    load_embeddings,
    search,
    write_embeddings,
)
from oracles import cosine_topk_oracle


def emb_file(tmp_path, records):
    path = tmp_path / "emb.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for doc_id, vec in records:
            fh.write(json.dumps({"id": doc_id, "vec": vec}) + "\n")
    return path


def test_load_two_records(tmp_path):
    store = load_embeddings(emb_file(tmp_path, [("a", [1, 0, 0, 0]), ("b", [0, 1, 0, 0])]))
    assert len(store) == 2
    assert store.dim == 4


def test_dimension_mismatch_names_both_dims(tmp_path):
    path = emb_file(tmp_path, [("a", [1, 0, 0, 0]), ("b", [0, 1, 0])])
    with pytest.raises(EmbeddingError, match=r"got 3.*index is 4"):
        load_embeddings(path)


def test_zero_norm_rejected(tmp_path):
    with pytest.raises(EmbeddingError, match="zero-norm"):
        load_embeddings(emb_file(tmp_path, [("a", [0.0, 0.0])]))


def test_duplicate_id_rejected(tmp_path):
    with pytest.raises(EmbeddingError, match="duplicate id"):
        load_embeddings(emb_file(tmp_path, [("a", [1, 0]), ("a", [0, 1])]))


def test_nan_rejected(tmp_path):
    path = tmp_path / "emb.jsonl"
    path.write_text('{"id": "a", "vec": [1.0, NaN]}\n', encoding="utf-8")
    with pytest.raises(EmbeddingError, match="NaN"):
        load_embeddings(path)


def test_vectors_normalized_at_load(tmp_path):
    store = load_embeddings(emb_file(tmp_path, [("a", [3.0, 4.0])]))
    assert np.linalg.norm(store.matrix[0]) == pytest.approx(1.0, abs=1e-6)


def test_identity_query_scores_one():
    store = build_store([("a", [0.3, 0.4, 0.5]), ("b", [1.0, 0.0, 0.0])])
    ranking = search(store, [0.3, 0.4, 0.5], 2)
    assert ranking.doc_ids()[0] == "a"
    assert ranking.entries[0][1] == pytest.approx(1.0, abs=1e-6)


def test_orthogonal_query_scores_zero():
    store = build_store([("only", [1.0, 0.0])])
    ranking = search(store, [0.0, 2.0], 1)
    assert ranking.entries[0][1] == pytest.approx(0.0, abs=1e-6)


def test_search_matches_oracle_100_docs():
    rng = np.random.default_rng(1234)
    vectors = {f"d{i:03d}": rng.normal(size=8).tolist() for i in range(100)}
    store = build_store(list(vectors.items()))
    query = rng.normal(size=8).tolist()
    ranking = search(store, query, 10)
    expected = cosine_topk_oracle(vectors, query, 10)
    assert ranking.doc_ids() == [doc_id for doc_id, _ in expected]
    for (doc_id, got), (_, want) in zip(ranking.entries, expected):
        assert got == pytest.approx(want, abs=1e-5)


def test_scale_invariance():
    rng = np.random.default_rng(5)
    store = build_store([(f"d{i}", rng.normal(size=6).tolist()) for i in range(20)])
    query = rng.normal(size=6)
    base = search(store, query, 20)
    for scale in (0.001, 7.5, 4096.0):
        scaled = search(store, scale * query, 20)
        assert scaled.doc_ids() == base.doc_ids()


def test_monotone_prefix():
    rng = np.random.default_rng(6)
    store = build_store([(f"d{i}", rng.normal(size=5).tolist()) for i in range(30)])
    query = rng.normal(size=5)
    for k in range(1, 30):
        assert search(store, query, k + 1).doc_ids()[:k] == search(store, query, k).doc_ids()


def test_k_larger_than_store():
    store = build_store([("a", [1.0, 0.0]), ("b", [0.0, 1.0])])
    assert len(search(store, [1.0, 1.0], 50)) == 2


def test_query_dimension_mismatch():
    store = build_store([("a", [1.0, 0.0])])
    with pytest.raises(EmbeddingError, match="dimension"):
        search(store, [1.0, 0.0, 0.0], 1)


def test_zero_query_rejected():
    store = build_store([("a", [1.0, 0.0])])
    with pytest.raises(EmbeddingError, match="zero norm"):
        search(store, [0.0, 0.0], 1)


def test_tie_break_is_lexicographic():
    store = build_store([("b", [1.0, 0.0]), ("a", [1.0, 0.0]), ("c", [0.0, 1.0])])
    ranking = search(store, [1.0, 0.0], 3)
    assert ranking.doc_ids() == ["a", "b", "c"]


def test_batch_matches_singles_any_worker_count():
    rng = np.random.default_rng(7)
    store = build_store([(f"d{i}", rng.normal(size=4).tolist()) for i in range(25)])
    queries = [(f"q{i}", rng.normal(size=4).tolist()) for i in range(3)]
    singles = [search(store, vec, 5, query_id=qid) for qid, vec in queries]
    for workers in (1, 2, 8):
        assert batch_search(store, queries, 5, max_workers=workers) == singles


def test_batch_empty():
    store = build_store([("a", [1.0, 0.0])])
    assert batch_search(store, [], 5) == []


def test_write_embeddings_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    records = [(f"d{i}", rng.normal(size=3).tolist()) for i in range(4)]
    path = tmp_path / "out.jsonl"
    write_embeddings(records, path)
    store = load_embeddings(path)
    assert store.ids == tuple(doc_id for doc_id, _ in records)


def test_subset_preserves_vectors():
    store = build_store([("a", [1.0, 0.0]), ("b", [0.0, 1.0]), ("c", [1.0, 1.0])])
    sub = store.subset(["c", "a"])
    assert sub.ids == ("c", "a")
    assert np.allclose(sub.vector("a"), store.vector("a"))
    with pytest.raises(EmbeddingError, match="not in store"):
        store.subset(["nope"])
