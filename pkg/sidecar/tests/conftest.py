import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sidecar_support import write_jsonl


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    """A small randomly initialized transformer saved locally, so the suite
    never touches a model hub."""
    from transformers import BertConfig, BertModel, BertTokenizerFast

    root = tmp_path_factory.mktemp("tiny_model")
    vocab = (
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        + [chr(c) for c in range(ord("a"), ord("z") + 1)]
        + ["##" + chr(c) for c in range(ord("a"), ord("z") + 1)]
        + [str(i) for i in range(10)]
    )
    vocab_file = root / "vocab.txt"
    vocab_file.write_text("\n".join(vocab), encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=True)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=128,
    )
    import torch

    torch.manual_seed(0)
    model = BertModel(config)
    model_dir = root / "hf"
    tokenizer.save_pretrained(model_dir)
    model.save_pretrained(model_dir)
    return str(model_dir)



@pytest.fixture
def ten_posts(tmp_path):
    records = []
    for i in range(10):
        record = {"id": f"p{i}", "original_text": f"post number {i} about topic {i % 3}",
                  "language": "eng"}
        if i % 2 == 0:
            record["ocr_text"] = f"ocr fragment {i}"
        if i % 3 == 0:
            record["translated_text"] = f"translated post {i}"
        records.append(record)
    return write_jsonl(records, tmp_path / "posts.jsonl")


@pytest.fixture
def toy_triplets(tmp_path):
    # Fully distinct rows: duplicate positives inside a shuffled batch would
    # turn in-batch negatives into false negatives and stall the loss.
    rows = [
        {"query": f"q {i}", "positive": f"q {i} match", "negative": f"x {63 - i}"}
        for i in range(64)
    ]
    return write_jsonl(rows, tmp_path / "triplets.jsonl")
