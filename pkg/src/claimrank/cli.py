"""Command-line interface: one subcommand per pipeline stage plus orchestration.

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 3 completed
with per-item fallbacks (count reported on stderr). With --json-errors a
failure also emits one JSON object on stderr for machine consumption.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .corpus import (
    Corpus,
    CorpusError,
    Post,
    RelevancePair,
    SelectorMode,
    TextSelector,
    convert_multiclaim_csv,
    load_corpus,
    load_fact_checks,
    load_posts,
    select_text,
)
from .dense import EmbeddingError, load_embeddings, search
from .evaluation import EvalReport, ablation_report, evaluate, format_report
from .fusion import RrfConfig, rrf_fuse
from .llm import (
    BatchStats,
    ChatEndpointConfig,
    ConfigurationError,
    LlmError,
    RerankRequest,
    ResponseCache,
    TransportError,
    make_chat_client,
    rerank as rerank_candidates,
    translate_post,
)
from .mining import (
    ExportFormat,
    MiningConfig,
    dense_retriever,
    export_triplets,
    mine_negatives_with_stats,
    mining_sweep,
)
from .pipeline import PipelineError, load_pipeline_config, run_pipeline
from .rankings import Ranking, read_run, write_run
from .sparse import SparseIndexError, bm25_search, build_index

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3

_VALIDATION_ERRORS = (
    click.ClickException,
    CorpusError,
    EmbeddingError,
    SparseIndexError,
    PipelineError,
    ConfigurationError,
    FileNotFoundError,
    ValueError,
)


def _selector_option(fn):
    fn = click.option(
        "--selector",
        type=click.Choice([m.value for m in SelectorMode]),
        default=SelectorMode.TRANSLATED_WITH_FALLBACK.value,
        show_default=True,
        help="Which text field represents each item.",
    )(fn)
    fn = click.option(
        "--no-title",
        is_flag=True,
        help="Use fact-check claims without prepending titles.",
    )(fn)
    return fn


def _endpoint_options(fn):
    for option in reversed([
        click.option("--base-url", required=True, help="Chat endpoint base URL (mock:* for offline stubs)."),
        click.option("--model", "model_name", required=True),
        click.option("--api-key-env", "api_key_env_var", default="", help="Env var holding the API key."),
        click.option("--timeout", type=float, default=60.0, show_default=True),
        click.option("--max-retries", type=int, default=2, show_default=True),
        click.option("--max-concurrent", "max_concurrent_requests", type=int, default=4, show_default=True),
        click.option("--temperature", type=float, default=0.0, show_default=True),
    ]):
        fn = option(fn)
    return fn


def _make_selector(selector: str, no_title: bool) -> TextSelector:
    return TextSelector(mode=SelectorMode(selector), include_title=not no_title)


def _make_endpoint(**kwargs) -> ChatEndpointConfig:
    return ChatEndpointConfig(**kwargs)


@click.group()
@click.version_option(version=__version__)
@click.option("--json-errors", is_flag=True, help="Emit error JSON on stderr.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def cli(json_errors: bool, verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@cli.command()
@click.option("--posts-csv", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--fact-checks-csv", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pairs-csv", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
def ingest(posts_csv: str, fact_checks_csv: str, pairs_csv: str, out_dir: str) -> int:
    """Convert MultiClaim-style CSVs to corpus JSONL and validate the result."""
    posts_path, fact_checks_path, pairs_path = convert_multiclaim_csv(
        posts_csv, fact_checks_csv, pairs_csv, out_dir
    )
    corpus = load_corpus(posts_path, fact_checks_path, pairs_path)
    n_posts, n_fact_checks, n_pairs = corpus.counts()
    click.echo(f"posts: {n_posts}\nfact_checks: {n_fact_checks}\npairs: {n_pairs}")
    if corpus.validation_warnings:
        click.echo(f"warnings: {len(corpus.validation_warnings)}")
        for warning in corpus.validation_warnings:
            click.echo(f"  {warning}", err=True)
    return EXIT_OK


@cli.command()
@click.option("--posts", "posts_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--force", is_flag=True, help="Re-translate posts that already have translated_text.")
@_endpoint_options
def translate(posts_path: str, out_path: str, cache_dir: str | None, force: bool, **endpoint_kwargs) -> int:
    """Translate posts to English, writing a posts file with translated_text set."""
    posts = load_posts(posts_path)
    client = make_chat_client(_make_endpoint(**endpoint_kwargs))
    cache = ResponseCache(cache_dir) if cache_dir else None
    stats = BatchStats()
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        for post in posts.values():
            if post.translated_text and not force:
                translated = post.translated_text
            else:
                translated = translate_post(client, post, cache, stats)
            record = {
                "id": post.id,
                "original_text": post.original_text,
                "ocr_text": post.ocr_text,
                "translated_text": translated,
                "language": post.language,
            }
            fh.write(json.dumps({k: v for k, v in record.items() if v is not None},
                                ensure_ascii=False) + "\n")
    click.echo(
        f"translated {len(posts)} posts "
        f"({stats.requests} requests, {stats.cache_hits} cache hits, {stats.fallbacks} fallbacks)"
    )
    if stats.fallbacks:
        click.echo(f"fallback posts: {', '.join(stats.fallback_ids)}", err=True)
        return EXIT_PARTIAL
    return EXIT_OK


@cli.command()
@click.option("--embeddings", "embeddings_path", type=click.Path(exists=True, dir_okay=False), required=True)
def index(embeddings_path: str) -> int:
    """Load and validate an embeddings file."""
    store = load_embeddings(embeddings_path)
    click.echo(f"embeddings: {len(store)}\ndim: {store.dim}")
    return EXIT_OK


@cli.command(name="search")
@click.option("--mode", type=click.Choice(["dense", "sparse"]), default="dense", show_default=True)
@click.option("--embeddings", "doc_embeddings", type=click.Path(exists=True, dir_okay=False),
              help="Fact-check embeddings (dense mode).")
@click.option("--query-embeddings", type=click.Path(exists=True, dir_okay=False),
              help="Post embeddings (dense mode).")
@click.option("--posts", "posts_path", type=click.Path(exists=True, dir_okay=False),
              help="Posts JSONL (sparse mode queries).")
@click.option("--fact-checks", "fact_checks_path", type=click.Path(exists=True, dir_okay=False),
              help="Fact-checks JSONL (sparse mode documents).")
@click.option("--query-id", "query_ids", multiple=True, help="Restrict to these query ids.")
@click.option("-k", type=int, default=50, show_default=True)
@click.option("--bm25-k1", type=float, default=1.2, show_default=True)
@click.option("--bm25-b", type=float, default=0.75, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="Run file (default: stdout).")
@_selector_option
def search_cmd(
    mode: str,
    doc_embeddings: str | None,
    query_embeddings: str | None,
    posts_path: str | None,
    fact_checks_path: str | None,
    query_ids: tuple[str, ...],
    k: int,
    bm25_k1: float,
    bm25_b: float,
    out_path: str | None,
    selector: str,
    no_title: bool,
) -> int:
    """Dense or BM25 retrieval for one query or the whole posts file."""
    text_selector = _make_selector(selector, no_title)
    rankings: list[Ranking] = []
    if mode == "dense":
        if not doc_embeddings or not query_embeddings:
            raise click.UsageError("dense mode needs --embeddings and --query-embeddings")
        doc_store = load_embeddings(doc_embeddings)
        query_store = load_embeddings(query_embeddings)
        ids = list(query_ids) if query_ids else list(query_store.ids)
        for query_id in ids:
            rankings.append(search(doc_store, query_store.vector(query_id), k, query_id=query_id))
    else:
        if not posts_path or not fact_checks_path:
            raise click.UsageError("sparse mode needs --posts and --fact-checks")
        posts = load_posts(posts_path)
        fact_checks = load_fact_checks(fact_checks_path)
        index_ = build_index([
            (fact_check.id, select_text(fact_check, text_selector))
            for fact_check in fact_checks.values()
        ])
        ids = list(query_ids) if query_ids else list(posts)
        for query_id in ids:
            if query_id not in posts:
                raise click.UsageError(f"unknown query id {query_id!r}")
            rankings.append(bm25_search(
                index_, select_text(posts[query_id], text_selector), k,
                k1=bm25_k1, b=bm25_b, query_id=query_id,
            ))
    if out_path:
        write_run(rankings, out_path)
        click.echo(f"wrote {sum(len(r) for r in rankings)} rows for {len(rankings)} queries to {out_path}")
    else:
        for ranking in rankings:
            for rank, (doc_id, score) in enumerate(ranking.entries, start=1):
                click.echo(f"{ranking.query_id}\t{doc_id}\t{rank}\t{score!r}\t{ranking.stage.value}")
    return EXIT_OK


@cli.command()
@click.option("--posts", "posts_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--fact-checks", "fact_checks_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--post-embeddings", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--fact-check-embeddings", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("-n", "--negatives", type=int, default=20, show_default=True)
@click.option("--depth", type=int, default=100, show_default=True)
@click.option("--margin", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "export_format", type=click.Choice([f.value for f in ExportFormat]),
              default=ExportFormat.JSONL_PAIR_WITH_NEGS.value, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--sweep", default=None, help="Comma-separated n values; writes a sweep TSV instead.")
def mine(
    posts_path: str,
    fact_checks_path: str,
    pairs_path: str,
    post_embeddings: str,
    fact_check_embeddings: str,
    negatives: int,
    depth: int,
    margin: float | None,
    seed: int,
    export_format: str,
    out_path: str,
    sweep: str | None,
) -> int:
    """Mine hard negatives against the dense retriever and export triplets."""
    corpus = load_corpus(posts_path, fact_checks_path, pairs_path)
    post_store = load_embeddings(post_embeddings)
    doc_store = load_embeddings(fact_check_embeddings)
    retriever = dense_retriever(corpus, post_store, doc_store)
    config = MiningConfig(
        negatives_per_query=negatives, candidate_depth=depth, margin=margin, seed=seed,
    )
    if sweep:
        n_values = [int(value) for value in sweep.split(",")]
        table = mining_sweep(retriever, corpus, corpus.pairs, n_values, config)
        Path(out_path).write_text(table, encoding="utf-8")
        click.echo(f"wrote sweep over n={n_values} to {out_path}")
        return EXIT_OK
    triplets, stats = mine_negatives_with_stats(retriever, corpus, corpus.pairs, config)
    export_triplets(triplets, out_path, ExportFormat(export_format))
    click.echo(
        f"mined {stats.triplets} triplets "
        f"(mean negatives {stats.mean_negatives:.2f}, "
        f"margin exclusion rate {stats.exclusion_rate:.4f}) -> {out_path}"
    )
    if stats.empty_triplets:
        click.echo(f"warning: {stats.empty_triplets} triplets have no negatives", err=True)
    return EXIT_OK


@cli.command(name="rerank")
@click.option("--run", "run_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Base run file whose top candidates are reranked.")
@click.option("--posts", "posts_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--fact-checks", "fact_checks_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--candidates", type=int, default=50, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@_selector_option
@_endpoint_options
def rerank_cmd(
    run_path: str,
    posts_path: str,
    fact_checks_path: str,
    candidates: int,
    cache_dir: str | None,
    out_path: str,
    selector: str,
    no_title: bool,
    **endpoint_kwargs,
) -> int:
    """Batch-rerank the top candidates of an existing run file."""
    text_selector = _make_selector(selector, no_title)
    posts = load_posts(posts_path)
    fact_checks = load_fact_checks(fact_checks_path)
    base_rankings = read_run(run_path)
    client = make_chat_client(_make_endpoint(**endpoint_kwargs))
    cache = ResponseCache(cache_dir) if cache_dir else None
    stats = BatchStats()
    reranked: list[Ranking] = []
    for base in base_rankings:
        post = posts.get(base.query_id)
        if post is None:
            raise click.UsageError(f"run query {base.query_id!r} not found in posts file")
        request = RerankRequest(
            query_text=select_text(post, text_selector),
            candidates=tuple(
                (doc_id, select_text(fact_checks[doc_id], text_selector))
                for doc_id, _ in base.entries[:candidates]
            ),
            augmentation_text=post.ocr_text or None,
        )
        reranked.append(rerank_candidates(client, request, base, cache, stats))
    write_run(reranked, out_path)
    click.echo(
        f"reranked {len(reranked)} queries "
        f"({stats.requests} requests, {stats.cache_hits} cache hits, {stats.fallbacks} fallbacks)"
    )
    if stats.fallbacks:
        click.echo(f"fallback queries: {', '.join(stats.fallback_ids)}", err=True)
        return EXIT_PARTIAL
    return EXIT_OK


@cli.command()
@click.argument("run_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k-rrf", type=float, default=60.0, show_default=True)
@click.option("--weights", default=None, help="Comma-separated per-file weights.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def fuse(run_files: tuple[str, ...], k_rrf: float, weights: str | None, out_path: str) -> int:
    """Reciprocal-rank-fuse two or more run files into one."""
    weight_values = [float(w) for w in weights.split(",")] if weights else None
    if weight_values is not None and len(weight_values) != len(run_files):
        raise click.UsageError(f"{len(weight_values)} weights for {len(run_files)} run files")
    runs = [read_run(path) for path in run_files]
    by_query: list[dict[str, Ranking]] = []
    for rankings in runs:
        grouped: dict[str, Ranking] = {}
        for ranking in rankings:
            grouped.setdefault(ranking.query_id, ranking)
        by_query.append(grouped)
    query_order: list[str] = list(dict.fromkeys(
        qid for grouped in by_query for qid in grouped
    ))
    fused: list[Ranking] = []
    for query_id in query_order:
        inputs, input_weights = [], []
        for file_index, grouped in enumerate(by_query):
            if query_id in grouped:
                inputs.append(grouped[query_id])
                if weight_values is not None:
                    input_weights.append(weight_values[file_index])
        config = RrfConfig(
            k_rrf=k_rrf,
            input_weights=tuple(input_weights) if weight_values is not None else None,
        )
        fused.append(rrf_fuse(inputs, config))
    write_run(fused, out_path)
    click.echo(f"fused {len(run_files)} runs over {len(fused)} queries -> {out_path}")
    return EXIT_OK


def _stub_corpus_for_eval(pairs: list[RelevancePair]) -> Corpus:
    # Language grouping needs the posts file; without it every query lands in
    # an "und" bucket so the metric still computes.
    posts = {
        post_id: Post(id=post_id, original_text="(unknown)", language="und")
        for post_id in dict.fromkeys(pair.post_id for pair in pairs)
    }
    return Corpus(posts=posts, fact_checks={}, pairs=tuple(pairs))


@cli.command(name="eval")
@click.option("--run", "run_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--posts", "posts_path", type=click.Path(exists=True, dir_okay=False),
              help="Posts JSONL for per-language grouping.")
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--label", default="", help="Config label recorded in the report.")
@click.option("--json-out", type=click.Path(dir_okay=False), help="Also write the report as JSON.")
def eval_cmd(
    run_path: str,
    pairs_path: str,
    posts_path: str | None,
    k: int,
    label: str,
    json_out: str | None,
) -> int:
    """Score a run file with success@k, per language plus macro average."""
    pairs: list[RelevancePair] = []
    with Path(pairs_path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                pairs.append(RelevancePair(str(obj["post_id"]), str(obj["fact_check_id"])))
    if posts_path:
        posts = load_posts(posts_path)
        corpus = Corpus(posts=posts, fact_checks={}, pairs=tuple(pairs))
    else:
        corpus = _stub_corpus_for_eval(pairs)
    rankings = read_run(run_path)
    report = evaluate(rankings, corpus.pairs, corpus, k, config_label=label)
    click.echo(format_report(report))
    if json_out:
        Path(json_out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


@cli.command(name="pipeline")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dry-run", is_flag=True, help="Validate config and inputs; touch no network.")
def pipeline_cmd(config_path: str, dry_run: bool) -> int:
    """Run the full retrieval pipeline described by a TOML config."""
    config = load_pipeline_config(config_path)
    result = run_pipeline(config, dry_run=dry_run)
    if result.dry_run:
        click.echo("dry run ok: configuration and inputs are valid")
        return EXIT_OK
    assert result.report is not None
    click.echo(format_report(result.report))
    click.echo(f"artifacts: {result.report_path.parent}")
    if result.fallbacks:
        click.echo(f"{result.fallbacks} items degraded to fallback", err=True)
        return EXIT_PARTIAL
    return EXIT_OK


@cli.command(name="report")
@click.argument("report_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="Write TSV here (default: stdout).")
def report_cmd(report_files: tuple[str, ...], out_path: str | None) -> int:
    """Tabulate report JSONs into the ablation TSV."""
    reports = [
        EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        for path in report_files
    ]
    table = ablation_report(reports)
    if out_path:
        Path(out_path).write_text(table, encoding="utf-8")
        click.echo(f"wrote {len(reports)}-row ablation table to {out_path}")
    else:
        click.echo(table, nl=False)
    return EXIT_OK


def _emit_error(exc: Exception, exit_code: int, json_errors: bool) -> None:
    if json_errors:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": exit_code}
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    args = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in args
    try:
        result = cli.main(args=args, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        return EXIT_RUNTIME
    except _VALIDATION_ERRORS as exc:
        if isinstance(exc, click.ClickException) and not json_errors:
            exc.show()
        else:
            _emit_error(exc, EXIT_VALIDATION, json_errors)
        return EXIT_VALIDATION
    except TransportError as exc:
        _emit_error(exc, EXIT_RUNTIME, json_errors)
        return EXIT_RUNTIME
    except (OSError, LlmError, RuntimeError) as exc:
        _emit_error(exc, EXIT_RUNTIME, json_errors)
        return EXIT_RUNTIME
    return int(result) if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
