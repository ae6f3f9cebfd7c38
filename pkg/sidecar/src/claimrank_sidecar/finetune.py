"""Contrastive fine-tuning on mined hard-negative triplets.

Consumes either export format of the engine's mining stage:

    {"query": ..., "positive": ..., "negative": ...}        one row per negative
    {"query": ..., "positive": ..., "negatives": [...]}     fanned out here

Each row becomes an (anchor, positive, negative) triple for a
multiple-negatives ranking loss, i.e. in-batch negatives plus the mined hard
negative. Hyperparameters are logged next to the saved model.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import torch

from .config import SidecarConfig, SidecarError
from .embed import load_model

logger = logging.getLogger(__name__)


def load_triplets(path: str | Path) -> list[tuple[str, str, str]]:
    rows: list[tuple[str, str, str]] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SidecarError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if "negative" in record:
                negatives = [record["negative"]]
            elif "negatives" in record:
                negatives = list(record["negatives"])
            else:
                raise SidecarError(f"{path}:{lineno}: no negative(s) field")
            for negative in negatives:
                rows.append((record["query"], record["positive"], negative))
    if not rows:
        raise SidecarError(f"{path}: no usable triplets")
    return rows


def finetune(
    triplets_path: str | Path,
    output_dir: str | Path,
    config: SidecarConfig,
    steps: int | None = None,
    epochs: int = 1,
    learning_rate: float = 2e-5,
    model=None,
) -> Path:
    """Train and save a fine-tuned model directory loadable by embed_file.

    Returns the saved model directory; the per-step loss sequence lands in
    ``training_log.json`` alongside it.
    """
    from datasets import Dataset
    from sentence_transformers import (
        SentenceTransformerTrainer,
        SentenceTransformerTrainingArguments,
    )
    from sentence_transformers.sentence_transformer import losses

    rows = load_triplets(triplets_path)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    if model is None:
        model = load_model(config)

    dataset = Dataset.from_dict({
        "anchor": [row[0] for row in rows],
        "positive": [row[1] for row in rows],
        "negative": [row[2] for row in rows],
    })
    args = SentenceTransformerTrainingArguments(
        output_dir=str(output_dir / "checkpoints"),
        per_device_train_batch_size=config.batch_size,
        num_train_epochs=epochs,
        max_steps=steps if steps is not None else -1,
        learning_rate=learning_rate,
        logging_steps=1,
        save_strategy="no",
        report_to=[],
        seed=config.seed,
        use_cpu=config.device == "cpu",
        disable_tqdm=True,
    )
    loss = losses.MultipleNegativesRankingLoss(model)
    trainer = SentenceTransformerTrainer(model=model, args=args, train_dataset=dataset, loss=loss)
    trainer.train()
    loss_curve = [entry["loss"] for entry in trainer.state.log_history if "loss" in entry]

    model_dir = output_dir / "model"
    model.save(str(model_dir))
    log = {
        "base_model": config.model,
        "triplets": len(rows),
        "batch_size": config.batch_size,
        "epochs": epochs,
        "max_steps": steps,
        "learning_rate": learning_rate,
        "seed": config.seed,
        "loss_curve": loss_curve,
    }
    (output_dir / "training_log.json").write_text(json.dumps(log, indent=2) + "\n", encoding="utf-8")
    logger.info("fine-tuned %s on %d triplets -> %s", config.model, len(rows), model_dir)
    return model_dir
