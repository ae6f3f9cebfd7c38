"""Embedding inference sidecar for the claimrank retrieval engine.

Files are the only interface to the engine: this package reads the corpus
JSONL formats and writes the embeddings JSONL format, never importing the
engine at runtime.
"""

__version__ = "0.1.0"

from .config import SidecarConfig, SidecarError
from .embed import embed_file
from .finetune import finetune

__all__ = ["SidecarConfig", "SidecarError", "embed_file", "finetune", "__version__"]
