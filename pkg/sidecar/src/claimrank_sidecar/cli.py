"""Sidecar CLI: `embed` a corpus file, `finetune` on mined triplets."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import SidecarConfig, SidecarError
from .embed import SELECTOR_MODES, embed_file
from .finetune import finetune


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="Model name or local model directory.")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=42)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="claimrank-sidecar")
    sub = parser.add_subparsers(dest="command", required=True)

    embed = sub.add_parser("embed", help="Embed a corpus JSONL file.")
    _add_shared(embed)
    embed.add_argument("--input", required=True, help="Posts or fact-checks JSONL.")
    embed.add_argument("--output", required=True, help="Embeddings JSONL to write.")
    embed.add_argument("--text-selector", choices=SELECTOR_MODES,
                       default="translated_with_fallback")
    embed.add_argument("--no-title", action="store_true",
                       help="Embed fact-check claims without titles.")
    embed.add_argument("--query-prompt", default=None,
                       help="Prefix prepended to every text (s2p-style query prompt).")
    embed.add_argument("--no-normalize", action="store_true")

    tune = sub.add_parser("finetune", help="Fine-tune on mined triplets.")
    _add_shared(tune)
    tune.add_argument("--triplets", required=True, help="Triplets JSONL from the mining stage.")
    tune.add_argument("--output-dir", required=True)
    tune.add_argument("--steps", type=int, default=None, help="Cap training steps (overrides epochs).")
    tune.add_argument("--epochs", type=int, default=1)
    tune.add_argument("--learning-rate", type=float, default=2e-5)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "embed":
            config = SidecarConfig(
                model=args.model, batch_size=args.batch_size, device=args.device,
                query_prompt=args.query_prompt, normalize=not args.no_normalize,
                seed=args.seed,
            )
            output = embed_file(
                args.input, args.output, args.text_selector, config,
                include_title=not args.no_title,
            )
            print(f"wrote {output}")
        else:
            config = SidecarConfig(
                model=args.model, batch_size=args.batch_size, device=args.device,
                seed=args.seed,
            )
            model_dir = finetune(
                args.triplets, args.output_dir, config,
                steps=args.steps, epochs=args.epochs, learning_rate=args.learning_rate,
            )
            print(f"saved {model_dir}")
    except SidecarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
