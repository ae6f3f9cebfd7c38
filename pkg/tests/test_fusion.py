import random

import pytest
from hypothesis import given, strategies as st

from claimrank.fusion import RrfConfig, rrf_fuse
from claimrank.rankings import Ranking, Stage
from oracles import rrf_oracle


def ranking_from_ids(ids, stage=Stage.DENSE, query_id="q"):
    n = len(ids)
    return Ranking(query_id, tuple((doc_id, float(n - i)) for i, doc_id in enumerate(ids)), stage)


def test_single_input_preserves_order():
    ranking = ranking_from_ids(["a", "b", "c"])
    fused = rrf_fuse([ranking])
    assert fused.doc_ids() == ["a", "b", "c"]
    for rank, (_, score) in enumerate(fused.entries, start=1):
        assert score == pytest.approx(1.0 / (60.0 + rank), abs=1e-12)


def test_hand_derived_two_list_example():
    a = ranking_from_ids(["d1", "d2", "d3"])
    b = ranking_from_ids(["d2", "d3", "d1"], stage=Stage.RERANKED)
    fused = rrf_fuse([a, b])
    assert fused.doc_ids() == ["d2", "d1", "d3"]
    expected = {
        "d2": 1 / 62 + 1 / 61,
        "d1": 1 / 61 + 1 / 63,
        "d3": 1 / 63 + 1 / 62,
    }
    for doc_id, score in fused.entries:
        assert score == pytest.approx(expected[doc_id], abs=1e-12)
    # the published approximations hold at 1e-6
    assert [round(s, 6) for _, s in fused.entries] == [0.032522, 0.032266, 0.032002]


def test_singleton_tie_breaks_by_id():
    a = ranking_from_ids(["d1"])
    b = ranking_from_ids(["d2"], stage=Stage.SPARSE)
    fused = rrf_fuse([a, b])
    assert fused.doc_ids() == ["d1", "d2"]
    assert fused.entries[0][1] == pytest.approx(1 / 61, abs=1e-12)
    assert fused.entries[1][1] == pytest.approx(1 / 61, abs=1e-12)


def test_union_property():
    a = ranking_from_ids(["x", "y"])
    b = ranking_from_ids(["y", "z"], stage=Stage.SPARSE)
    fused = rrf_fuse([a, b])
    assert set(fused.doc_ids()) == {"x", "y", "z"}


def test_dominance():
    # a beats b in every list containing either -> fused score strictly higher
    first = ranking_from_ids(["a", "b", "c"])
    second = ranking_from_ids(["a", "c", "b"], stage=Stage.SPARSE)
    fused = dict(rrf_fuse([first, second]).entries)
    assert fused["a"] > fused["b"]
    assert fused["a"] > fused["c"]


def test_empty_input_rejected():
    with pytest.raises(ValueError, match="at least one"):
        rrf_fuse([])


def test_mixed_query_ids_rejected():
    a = ranking_from_ids(["x"], query_id="q1")
    b = ranking_from_ids(["x"], query_id="q2")
    with pytest.raises(ValueError, match="different queries"):
        rrf_fuse([a, b])


def test_weight_length_mismatch_rejected():
    a = ranking_from_ids(["x"])
    with pytest.raises(ValueError, match="weights"):
        rrf_fuse([a], RrfConfig(input_weights=(1.0, 2.0)))


def test_config_validation():
    with pytest.raises(ValueError, match="k_rrf"):
        RrfConfig(k_rrf=0.0)
    with pytest.raises(ValueError, match="positive"):
        RrfConfig(input_weights=(1.0, -1.0))


def test_weights_scale_contributions():
    a = ranking_from_ids(["x"])
    b = ranking_from_ids(["y"], stage=Stage.SPARSE)
    fused = rrf_fuse([a, b], RrfConfig(input_weights=(1.0, 3.0)))
    assert fused.doc_ids() == ["y", "x"]
    assert dict(fused.entries)["y"] == pytest.approx(3.0 / 61, abs=1e-12)


def _random_instance(rng):
    doc_pool = [f"d{i:02d}" for i in range(rng.randint(2, 50))]
    lists = []
    for _ in range(rng.randint(2, 4)):
        ids = rng.sample(doc_pool, rng.randint(1, len(doc_pool)))
        lists.append(ids)
    k_rrf = rng.choice([10.0, 60.0, 60.5, 100.0])
    weights = [rng.choice([0.5, 1.0, 2.0]) for _ in lists] if rng.random() < 0.5 else None
    return lists, k_rrf, weights


def test_matches_oracle_randomized():
    rng = random.Random(2024)
    for _ in range(50):
        lists, k_rrf, weights = _random_instance(rng)
        rankings = [ranking_from_ids(ids, stage=Stage.DENSE) for ids in lists]
        config = RrfConfig(k_rrf=k_rrf, input_weights=tuple(weights) if weights else None)
        fused = rrf_fuse(rankings, config)
        expected = rrf_oracle(lists, k_rrf, weights)
        assert fused.doc_ids() == [doc_id for doc_id, _ in expected]
        for (_, got), (_, want) in zip(fused.entries, expected):
            assert got == pytest.approx(want, abs=1e-12)


@given(
    st.lists(
        st.lists(st.sampled_from([f"d{i}" for i in range(12)]), min_size=1, max_size=12, unique=True),
        min_size=2,
        max_size=4,
    ),
    st.randoms(use_true_random=False),
)
def test_permutation_invariance(lists, rng):
    rankings = [ranking_from_ids(ids) for ids in lists]
    weights = tuple(1.0 + i * 0.5 for i in range(len(rankings)))
    baseline = rrf_fuse(rankings, RrfConfig(input_weights=weights))
    order = list(range(len(rankings)))
    rng.shuffle(order)
    permuted = rrf_fuse(
        [rankings[i] for i in order],
        RrfConfig(input_weights=tuple(weights[i] for i in order)),
    )
    assert permuted.entries == baseline.entries
