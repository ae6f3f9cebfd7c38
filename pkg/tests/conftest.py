import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from claimrank.corpus import Corpus, FactCheck, Post, RelevancePair
from support import write_jsonl


@pytest.fixture
def small_corpus() -> Corpus:
    posts = {
        "p1": Post(id="p1", original_text="covid vaccine rumor", language="eng",
                   ocr_text="screenshot text"),
        "p2": Post(id="p2", original_text="vacina boato", language="por",
                   translated_text="vaccine rumor"),
        "p3": Post(id="p3", original_text="flat earth claim", language="eng"),
    }
    fact_checks = {
        "f1": FactCheck(id="f1", claim="the vaccine claim is false", language="eng",
                        title="Vaccine check"),
        "f2": FactCheck(id="f2", claim="a afirmacao e falsa", language="por",
                        translated_claim="the claim is false"),
        "f3": FactCheck(id="f3", claim="the earth is round", language="eng"),
        "f4": FactCheck(id="f4", claim="unrelated fact-check", language="deu"),
    }
    pairs = (
        RelevancePair("p1", "f1"),
        RelevancePair("p2", "f2"),
        RelevancePair("p3", "f3"),
    )
    return Corpus(posts=posts, fact_checks=fact_checks, pairs=pairs)


@pytest.fixture
def corpus_files(tmp_path, small_corpus):
    """The small corpus serialized to JSONL files."""
    posts = write_jsonl(
        [
            {"id": p.id, "original_text": p.original_text, "language": p.language,
             **({"ocr_text": p.ocr_text} if p.ocr_text else {}),
             **({"translated_text": p.translated_text} if p.translated_text else {})}
            for p in small_corpus.posts.values()
        ],
        tmp_path / "posts.jsonl",
    )
    fact_checks = write_jsonl(
        [
            {"id": f.id, "claim": f.claim, "language": f.language,
             **({"title": f.title} if f.title else {}),
             **({"translated_claim": f.translated_claim} if f.translated_claim else {})}
            for f in small_corpus.fact_checks.values()
        ],
        tmp_path / "fact_checks.jsonl",
    )
    pairs = write_jsonl(
        [{"post_id": p.post_id, "fact_check_id": p.fact_check_id} for p in small_corpus.pairs],
        tmp_path / "pairs.jsonl",
    )
    return {"posts": posts, "fact_checks": fact_checks, "pairs": pairs}
