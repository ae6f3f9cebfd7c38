"""claimrank: retrieval engine and evaluation harness for fact-checked claims.

Two-stage pipeline: exact dense retrieval over (optionally LLM-translated)
posts, optional BM25 and LLM reranking of the top candidates, reciprocal rank
fusion, and per-language success@k scoring. Hard-negative mining exports
contrastive training triplets for an external embedder fine-tune.
"""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    FactCheck,
    Post,
    RelevancePair,
    SelectorMode,
    TextSelector,
    load_corpus,
    select_text,
    split_by_language,
    write_corpus,
)
from .dense import EmbeddingStore, batch_search, load_embeddings, search
from .evaluation import EvalReport, ablation_report, evaluate, success_at_k
from .fusion import RrfConfig, rrf_fuse
from .llm import (
    ChatEndpointConfig,
    RerankRequest,
    RerankResponse,
    ResponseCache,
    build_rerank_prompt,
    build_translation_prompt,
    parse_rerank_response,
    rerank,
    translate_post,
)
from .mining import MiningConfig, TrainingTriplet, export_triplets, mine_negatives, mining_sweep
from .pipeline import PipelineConfig, load_pipeline_config, run_pipeline
from .rankings import Ranking, Stage, read_run, write_run
from .sparse import InvertedIndex, bm25_search, build_index, tokenize

__all__ = [
    "__version__",
    "Corpus", "FactCheck", "Post", "RelevancePair", "SelectorMode", "TextSelector",
    "load_corpus", "select_text", "split_by_language", "write_corpus",
    "EmbeddingStore", "batch_search", "load_embeddings", "search",
    "EvalReport", "ablation_report", "evaluate", "success_at_k",
    "RrfConfig", "rrf_fuse",
    "ChatEndpointConfig", "RerankRequest", "RerankResponse", "ResponseCache",
    "build_rerank_prompt", "build_translation_prompt", "parse_rerank_response",
    "rerank", "translate_post",
    "MiningConfig", "TrainingTriplet", "export_triplets", "mine_negatives", "mining_sweep",
    "PipelineConfig", "load_pipeline_config", "run_pipeline",
    "Ranking", "Stage", "read_run", "write_run",
    "InvertedIndex", "bm25_search", "build_index", "tokenize",
]
