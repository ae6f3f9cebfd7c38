"""End-to-end pipeline: dense retrieval, optional BM25 and LLM rerank, RRF, eval.

Configuration comes from a TOML file (paths resolve relative to it). A
validation pass runs before any stage: every referenced file must exist,
embedding dimensions must agree, and every gold query must have an embedding,
so a bad config fails before any network call or long scan. All intermediate
rankings persist as TREC-style run files and every run writes a manifest with
input hashes, which is what makes ablation tables auditable.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .corpus import Corpus, SelectorMode, TextSelector, load_corpus, select_text
from .dense import EmbeddingStore, load_embeddings, search
from .evaluation import EvalReport, evaluate
from .fusion import RrfConfig, rrf_fuse
from .llm import (
    BatchStats,
    ChatClient,
    ChatEndpointConfig,
    RerankRequest,
    ResponseCache,
    make_chat_client,
    rerank,
    translate_post,
)
from .rankings import Ranking, Stage, write_run
from .sparse import DEFAULT_B, DEFAULT_K1, bm25_search, build_index

logger = logging.getLogger(__name__)


class PipelineError(Exception):
    pass


class PipelineConfigError(PipelineError):
    """Configuration problem caught by the fail-fast validation pass."""


class PoolMode(str, enum.Enum):
    FULL = "full"                    # crosslingual: every query searches all fact-checks
    SAME_LANGUAGE = "same_language"  # monolingual: pool restricted to the post's language


@dataclass(frozen=True)
class LlmStageConfig:
    enabled: bool = False
    endpoint: ChatEndpointConfig | None = None
    cache_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.enabled and self.endpoint is None:
            raise PipelineConfigError("enabled LLM stage needs an [*.endpoint] table")


@dataclass(frozen=True)
class PipelineConfig:
    posts: Path
    fact_checks: Path
    pairs: Path
    posts_embeddings: Path
    fact_check_embeddings: Path
    output_dir: Path
    label: str = ""
    selector: TextSelector = TextSelector()
    k_candidates: int = 50
    final_k: int = 10
    pool_mode: PoolMode = PoolMode.FULL
    rrf: RrfConfig = RrfConfig()
    bm25_enabled: bool = False
    bm25_k1: float = DEFAULT_K1
    bm25_b: float = DEFAULT_B
    translation: LlmStageConfig = LlmStageConfig()
    rerank: LlmStageConfig = LlmStageConfig()

    def __post_init__(self) -> None:
        if self.k_candidates < 1 or self.final_k < 1:
            raise PipelineConfigError("k_candidates and final_k must be >= 1")
        if self.final_k > self.k_candidates:
            raise PipelineConfigError(
                f"final_k ({self.final_k}) must not exceed k_candidates ({self.k_candidates})"
            )

    def fusion_input_count(self) -> int:
        return 1 + int(self.bm25_enabled) + int(self.rerank.enabled)


_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate_env(value):
    """Expand ${VAR} in string values (for secrets and machine-local paths)."""
    if isinstance(value, str):
        def substitute(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise PipelineConfigError(f"environment variable {name!r} is not set")
            return os.environ[name]
        return _ENV_RE.sub(substitute, value)
    if isinstance(value, dict):
        return {k: _interpolate_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate_env(v) for v in value]
    return value


def _endpoint_from_table(table: dict) -> ChatEndpointConfig:
    known = {
        "base_url", "model_name", "api_key_env_var", "timeout",
        "max_retries", "max_concurrent_requests", "temperature",
    }
    unknown = set(table) - known
    if unknown:
        raise PipelineConfigError(f"unknown endpoint keys: {sorted(unknown)}")
    try:
        return ChatEndpointConfig(**table)
    except TypeError as exc:
        raise PipelineConfigError(f"bad endpoint table: {exc}") from exc


def _llm_stage_from_table(table: dict, base_dir: Path) -> LlmStageConfig:
    endpoint = None
    if "endpoint" in table:
        endpoint = _endpoint_from_table(table["endpoint"])
    cache_dir = table.get("cache_dir")
    return LlmStageConfig(
        enabled=bool(table.get("enabled", False)),
        endpoint=endpoint,
        cache_dir=(base_dir / cache_dir) if cache_dir else None,
    )


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    """Parse the pipeline TOML; relative paths resolve next to the config file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise PipelineConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise PipelineConfigError(f"{path}: {exc}") from exc
    raw = _interpolate_env(raw)
    base = path.resolve().parent

    def table(name: str) -> dict:
        value = raw.get(name, {})
        if not isinstance(value, dict):
            raise PipelineConfigError(f"[{name}] must be a table")
        return value

    corpus_t, embeddings_t = table("corpus"), table("embeddings")
    retrieval_t, rrf_t, bm25_t, output_t = (
        table("retrieval"), table("rrf"), table("bm25"), table("output"),
    )
    for key in ("posts", "fact_checks", "pairs"):
        if key not in corpus_t:
            raise PipelineConfigError(f"[corpus] is missing {key!r}")
    for key in ("posts", "fact_checks"):
        if key not in embeddings_t:
            raise PipelineConfigError(f"[embeddings] is missing {key!r}")
    if "directory" not in output_t:
        raise PipelineConfigError("[output] is missing 'directory'")

    try:
        selector = TextSelector(
            mode=SelectorMode(retrieval_t.get("text_selector", "translated_with_fallback")),
            include_title=bool(retrieval_t.get("include_title", True)),
        )
        pool_mode = PoolMode(retrieval_t.get("pool_mode", "full"))
    except ValueError as exc:
        raise PipelineConfigError(str(exc)) from exc

    weights = rrf_t.get("weights")
    try:
        rrf = RrfConfig(
            k_rrf=float(rrf_t.get("k_rrf", 60.0)),
            input_weights=tuple(float(w) for w in weights) if weights else None,
        )
    except ValueError as exc:
        raise PipelineConfigError(str(exc)) from exc

    return PipelineConfig(
        posts=base / corpus_t["posts"],
        fact_checks=base / corpus_t["fact_checks"],
        pairs=base / corpus_t["pairs"],
        posts_embeddings=base / embeddings_t["posts"],
        fact_check_embeddings=base / embeddings_t["fact_checks"],
        output_dir=base / output_t["directory"],
        label=str(raw.get("label", "")) or Path(output_t["directory"]).name,
        selector=selector,
        k_candidates=int(retrieval_t.get("k_candidates", 50)),
        final_k=int(retrieval_t.get("final_k", 10)),
        pool_mode=pool_mode,
        rrf=rrf,
        bm25_enabled=bool(bm25_t.get("enabled", False)),
        bm25_k1=float(bm25_t.get("k1", DEFAULT_K1)),
        bm25_b=float(bm25_t.get("b", DEFAULT_B)),
        translation=_llm_stage_from_table(table("translation"), base),
        rerank=_llm_stage_from_table(table("rerank"), base),
    )


@dataclass
class PipelineResult:
    report: EvalReport | None
    fallbacks: int
    run_files: dict[str, Path] = field(default_factory=dict)
    report_path: Path | None = None
    manifest_path: Path | None = None
    dry_run: bool = False


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_snapshot(config: PipelineConfig) -> dict:
    def encode(value):
        if isinstance(value, Path):
            return str(value)
        if isinstance(value, enum.Enum):
            return value.value
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            return {f.name: encode(getattr(value, f.name)) for f in dataclasses.fields(value)}
        if isinstance(value, (list, tuple)):
            return [encode(v) for v in value]
        return value
    return encode(config)


def _validate(config: PipelineConfig) -> tuple[Corpus, EmbeddingStore, EmbeddingStore]:
    for name in ("posts", "fact_checks", "pairs", "posts_embeddings", "fact_check_embeddings"):
        path: Path = getattr(config, name)
        if not path.is_file():
            raise PipelineConfigError(f"{name} file does not exist: {path}")
    for stage_name in ("translation", "rerank"):
        stage: LlmStageConfig = getattr(config, stage_name)
        if stage.enabled:
            endpoint = stage.endpoint
            assert endpoint is not None
            if endpoint.api_key_env_var and not os.environ.get(endpoint.api_key_env_var):
                raise PipelineConfigError(
                    f"[{stage_name}] api_key_env_var {endpoint.api_key_env_var!r} is not set"
                )
    if config.rrf.input_weights is not None:
        expected = config.fusion_input_count()
        if expected > 1 and len(config.rrf.input_weights) != expected:
            raise PipelineConfigError(
                f"rrf weights length {len(config.rrf.input_weights)} does not match "
                f"{expected} fusion inputs"
            )

    corpus = load_corpus(config.posts, config.fact_checks, config.pairs)
    post_store = load_embeddings(config.posts_embeddings)
    doc_store = load_embeddings(config.fact_check_embeddings)
    if post_store.dim != doc_store.dim:
        raise PipelineConfigError(
            f"embedding dimension mismatch: posts {post_store.dim}, "
            f"fact-checks {doc_store.dim}"
        )
    gold = corpus.gold_map()
    missing_queries = [pid for pid in gold if pid not in post_store]
    if missing_queries:
        raise PipelineConfigError(
            f"posts without embeddings: {sorted(missing_queries)[:5]!r}"
        )
    missing_docs = [fid for fid in corpus.fact_checks if fid not in doc_store]
    if missing_docs:
        raise PipelineConfigError(
            f"fact-checks without embeddings: {sorted(missing_docs)[:5]!r}"
        )
    return corpus, post_store, doc_store


def run_pipeline(
    config: PipelineConfig,
    dry_run: bool = False,
    translate_client: ChatClient | None = None,
    rerank_client: ChatClient | None = None,
) -> PipelineResult:
    """Run validation plus every enabled stage; see PipelineResult for artifacts.

    Mock clients can be injected for tests; otherwise clients are built from
    the configured endpoints. ``fallbacks`` counts per-item degradations
    (translation fell back to the original text, rerank fell back to the base
    list); the CLI maps a nonzero count to exit code 3.
    """
    corpus, post_store, doc_store = _validate(config)
    if config.translation.enabled and translate_client is None:
        translate_client = make_chat_client(config.translation.endpoint)
    if config.rerank.enabled and rerank_client is None:
        rerank_client = make_chat_client(config.rerank.endpoint)
    if dry_run:
        logger.info("dry run: configuration and inputs are valid")
        return PipelineResult(report=None, fallbacks=0, dry_run=True)

    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    gold = corpus.gold_map()
    queries = [corpus.posts[pid] for pid in corpus.posts if pid in gold]
    stats = BatchStats()
    run_files: dict[str, Path] = {}

    # Translation: swap in the model's English text as each post's translated
    # view before any stage reads query text.
    posts_by_id = dict(corpus.posts)
    if config.translation.enabled:
        cache = ResponseCache(config.translation.cache_dir) if config.translation.cache_dir else None
        translations: dict[str, str] = {}
        for post in queries:
            translated = translate_post(translate_client, post, cache, stats)
            translations[post.id] = translated
            posts_by_id[post.id] = dataclasses.replace(post, translated_text=translated)
        translations_path = out / "translations.jsonl"
        with translations_path.open("w", encoding="utf-8", newline="\n") as fh:
            for post_id, text in translations.items():
                fh.write(json.dumps({"id": post_id, "translated_text": text}, ensure_ascii=False) + "\n")
        run_files["translations"] = translations_path

    def query_text(post_id: str) -> str:
        return select_text(posts_by_id[post_id], config.selector)

    # Retrieval pools, keyed by language under same_language mode.
    doc_selector = config.selector
    if config.pool_mode is PoolMode.SAME_LANGUAGE:
        pool_ids = {
            language: [f.id for f in corpus.fact_checks.values() if f.language == language]
            for language in {p.language for p in queries}
        }
    else:
        pool_ids = {None: list(corpus.fact_checks)}

    def pool_key(post) -> str | None:
        return post.language if config.pool_mode is PoolMode.SAME_LANGUAGE else None

    dense_stores = {
        key: doc_store.subset(ids) if ids else None for key, ids in pool_ids.items()
    }

    dense_rankings: list[Ranking] = []
    for post in queries:
        store = dense_stores[pool_key(post)]
        if store is None or len(store) == 0:
            dense_rankings.append(Ranking(post.id, (), Stage.DENSE))
            continue
        dense_rankings.append(
            search(store, post_store.vector(post.id), config.k_candidates, query_id=post.id)
        )
    run_files["dense"] = out / "dense.tsv"
    write_run(dense_rankings, run_files["dense"])

    sparse_rankings: list[Ranking] | None = None
    if config.bm25_enabled:
        indexes = {}
        for key, ids in pool_ids.items():
            docs = [(fid, select_text(corpus.fact_checks[fid], doc_selector)) for fid in ids]
            indexes[key] = build_index(docs) if docs else None
        sparse_rankings = []
        for post in queries:
            index = indexes[pool_key(post)]
            if index is None:
                sparse_rankings.append(Ranking(post.id, (), Stage.SPARSE))
                continue
            sparse_rankings.append(bm25_search(
                index, query_text(post.id), config.k_candidates,
                k1=config.bm25_k1, b=config.bm25_b, query_id=post.id,
            ))
        run_files["sparse"] = out / "sparse.tsv"
        write_run(sparse_rankings, run_files["sparse"])

    reranked_rankings: list[Ranking] | None = None
    if config.rerank.enabled:
        cache = ResponseCache(config.rerank.cache_dir) if config.rerank.cache_dir else None
        reranked_rankings = []
        for post, dense_ranking in zip(queries, dense_rankings):
            if len(dense_ranking) == 0:
                reranked_rankings.append(Ranking(post.id, (), Stage.RERANKED, fallback=True))
                stats.record_fallback(post.id)
                continue
            candidates = tuple(
                (doc_id, select_text(corpus.fact_checks[doc_id], doc_selector))
                for doc_id, _ in dense_ranking.entries[:50]
            )
            request = RerankRequest(
                query_text=query_text(post.id),
                candidates=candidates,
                augmentation_text=post.ocr_text or None,
            )
            reranked_rankings.append(rerank(rerank_client, request, dense_ranking, cache, stats))
        run_files["reranked"] = out / "reranked.tsv"
        write_run(reranked_rankings, run_files["reranked"])

    # Empty rankings stay in the fusion inputs (they contribute nothing) so
    # configured weights keep their stage alignment.
    final_rankings: list[Ranking] = []
    fused_rankings: list[Ranking] = []
    for i, post in enumerate(queries):
        inputs = [dense_rankings[i]]
        if sparse_rankings is not None:
            inputs.append(sparse_rankings[i])
        if reranked_rankings is not None:
            inputs.append(reranked_rankings[i])
        if len(inputs) > 1:
            fused = rrf_fuse(inputs, config.rrf)
            fused_rankings.append(fused)
            final_rankings.append(fused.truncate(config.final_k))
        else:
            final_rankings.append(inputs[0].truncate(config.final_k))
    if fused_rankings:
        run_files["fused"] = out / "fused.tsv"
        write_run(fused_rankings, run_files["fused"])
    run_files["final"] = out / "final.tsv"
    write_run(final_rankings, run_files["final"])

    report = evaluate(final_rankings, corpus.pairs, corpus, config.final_k, config.label)
    report_path = out / "report.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")

    manifest = {
        "label": config.label,
        "version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config": _config_snapshot(config),
        "inputs": {
            name: _sha256(getattr(config, name))
            for name in ("posts", "fact_checks", "pairs", "posts_embeddings", "fact_check_embeddings")
        },
        "queries": len(queries),
        "fallbacks": stats.fallbacks,
        "fallback_ids": sorted(stats.fallback_ids),
        "requests": stats.requests,
        "cache_hits": stats.cache_hits,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    if stats.fallbacks:
        logger.warning("%d items degraded to fallback during this run", stats.fallbacks)
    return PipelineResult(
        report=report,
        fallbacks=stats.fallbacks,
        run_files=run_files,
        report_path=report_path,
        manifest_path=manifest_path,
    )
