"""Batch-embed a corpus JSONL file into the engine's embeddings JSONL format.

Input records are either posts ({"id", "original_text", "ocr_text"?,
"translated_text"?, "language"}) or fact-checks ({"id", "claim", "title"?,
"translated_claim"?, "language"}); the text selector mirrors the engine's
documented modes so both sides agree on what was embedded.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterator

import numpy as np
import torch

from .config import SidecarConfig, SidecarError

logger = logging.getLogger(__name__)

SELECTOR_MODES = ("original", "original_plus_ocr", "translated_with_fallback")


def select_record_text(record: dict, mode: str, include_title: bool = True) -> str:
    """Resolve the text view of one corpus record under the selector mode."""
    if mode not in SELECTOR_MODES:
        raise SidecarError(f"unknown text selector {mode!r}")
    if "original_text" in record:  # post
        original = record.get("original_text", "")
        ocr = record.get("ocr_text") or ""
        translated = record.get("translated_text") or ""
        if mode == "original":
            text = original
        elif mode == "original_plus_ocr":
            text = "\n".join(part for part in (original, ocr) if part)
        else:
            text = translated or "\n".join(part for part in (original, ocr) if part)
    elif "claim" in record:  # fact-check
        claim = record.get("claim", "")
        if mode == "translated_with_fallback":
            claim = record.get("translated_claim") or claim
        title = record.get("title") or ""
        text = "\n".join(part for part in (title, claim) if part) if include_title else claim
    else:
        raise SidecarError(f"record {record.get('id')!r} is neither a post nor a fact-check")
    if not text:
        raise SidecarError(f"record {record.get('id')!r} has no usable text under {mode!r}")
    return text


def iter_corpus(path: str | Path) -> Iterator[tuple[str, dict]]:
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SidecarError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if "id" not in record:
                raise SidecarError(f"{path}:{lineno}: record has no id")
            yield str(record["id"]), record


def load_model(config: SidecarConfig):
    from sentence_transformers import SentenceTransformer

    try:
        return SentenceTransformer(config.model, device=config.device)
    except Exception as exc:
        raise SidecarError(f"could not load model {config.model!r}: {exc}") from exc


def embed_file(
    input_path: str | Path,
    output_path: str | Path,
    text_selector: str,
    config: SidecarConfig,
    include_title: bool = True,
    model=None,
) -> Path:
    """Embed every record of ``input_path``; one output line per input line.

    Ids and order are preserved; vectors share one dimension and are
    unit-norm when ``config.normalize`` is on.
    """
    records = list(iter_corpus(input_path))
    ids = [record_id for record_id, _ in records]
    texts = [select_record_text(record, text_selector, include_title) for _, record in records]
    if config.query_prompt:
        texts = [config.query_prompt + text for text in texts]

    torch.manual_seed(config.seed)
    if model is None:
        model = load_model(config)
    try:
        vectors = model.encode(
            texts,
            batch_size=config.batch_size,
            normalize_embeddings=config.normalize,
            convert_to_numpy=True,
            show_progress_bar=False,
        )
    except torch.cuda.OutOfMemoryError as exc:
        raise SidecarError(
            f"out of memory at batch_size={config.batch_size}; retry with a smaller --batch-size"
        ) from exc
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise SidecarError(
                f"out of memory at batch_size={config.batch_size}; retry with a smaller --batch-size"
            ) from exc
        raise

    vectors = np.asarray(vectors, dtype=np.float32)
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("w", encoding="utf-8", newline="\n") as fh:
        for record_id, vector in zip(ids, vectors):
            fh.write(json.dumps({"id": record_id, "vec": [float(x) for x in vector]}) + "\n")
    logger.info("embedded %d records (dim=%d) -> %s", len(ids), vectors.shape[1], output_path)
    return output_path
