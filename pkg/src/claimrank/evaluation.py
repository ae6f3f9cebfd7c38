"""success@k scoring, per-language aggregation, and ablation reporting.

A query succeeds when any of its gold fact-checks appears in the top k of its
final ranking. Per-language scores are means over that language's queries;
the headline number is the unweighted macro average across languages. Queries
without a ranking count as failures rather than being dropped, so denominators
stay comparable across configurations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Corpus, RelevancePair
from .rankings import Ranking

logger = logging.getLogger(__name__)


def success_at_k(ranking: Ranking, gold_ids: set[str], k: int) -> int:
    """1 if any gold doc appears within the first min(k, len) entries, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold_ids:
        raise ValueError("gold_ids must be non-empty")
    return int(any(doc_id in gold_ids for doc_id, _ in ranking.entries[:k]))


@dataclass(frozen=True)
class EvalReport:
    per_language: dict[str, float]
    macro_avg: float
    k: int
    n_queries: dict[str, int]
    config_label: str
    missing: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_label": self.config_label,
            "k": self.k,
            "per_language": dict(sorted(self.per_language.items())),
            "macro_avg": self.macro_avg,
            "n_queries": dict(sorted(self.n_queries.items())),
            "missing": dict(sorted(self.missing.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            per_language=dict(data["per_language"]),
            macro_avg=float(data["macro_avg"]),
            k=int(data["k"]),
            n_queries={k: int(v) for k, v in data["n_queries"].items()},
            config_label=str(data["config_label"]),
            missing={k: int(v) for k, v in data.get("missing", {}).items()},
        )


def evaluate(
    rankings: Iterable[Ranking],
    pairs: Sequence[RelevancePair],
    corpus: Corpus,
    k: int,
    config_label: str = "",
) -> EvalReport:
    """Score rankings against gold pairs, grouped by each post's language."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold: dict[str, set[str]] = {}
    for pair in pairs:
        gold.setdefault(pair.post_id, set()).add(pair.fact_check_id)

    by_query: dict[str, Ranking] = {}
    for ranking in rankings:
        by_query.setdefault(ranking.query_id, ranking)

    hits: dict[str, int] = {}
    totals: dict[str, int] = {}
    missing: dict[str, int] = {}
    for post_id, gold_ids in gold.items():
        post = corpus.posts.get(post_id)
        if post is None:
            raise ValueError(f"pair references post {post_id!r} not in corpus")
        language = post.language
        totals[language] = totals.get(language, 0) + 1
        ranking = by_query.get(post_id)
        if ranking is None:
            missing[language] = missing.get(language, 0) + 1
            continue
        hits[language] = hits.get(language, 0) + success_at_k(ranking, gold_ids, k)

    per_language = {lang: hits.get(lang, 0) / n for lang, n in totals.items()}
    macro = sum(per_language.values()) / len(per_language) if per_language else 0.0
    if missing:
        logger.warning(
            "%d queries had no ranking and were scored 0", sum(missing.values())
        )
    return EvalReport(per_language, macro, k, totals, config_label, missing)


def format_report(report: EvalReport) -> str:
    """Human-readable per-language table for terminal output."""
    lines = [f"success@{report.k}" + (f"  [{report.config_label}]" if report.config_label else "")]
    for language in sorted(report.per_language):
        lines.append(
            f"  {language}  {report.per_language[language]:.4f}"
            f"  (n={report.n_queries[language]}"
            + (f", missing={report.missing[language]}" if report.missing.get(language) else "")
            + ")"
        )
    lines.append(f"  avg  {report.macro_avg:.4f}")
    return "\n".join(lines)


def ablation_report(reports: Sequence[EvalReport]) -> str:
    """TSV ablation table: one row per config, sorted by macro average descending.

    The delta column is each row's average minus the first (best) row's, so the
    table doubles as a reranker/config comparison sheet. Values use 4 decimals;
    languages absent from a report show "-".
    """
    if not reports:
        raise ValueError("no reports to tabulate")
    ks = {r.k for r in reports}
    if len(ks) != 1:
        raise ValueError(f"reports disagree on k: {sorted(ks)}")
    languages = sorted({lang for r in reports for lang in r.per_language})
    rows = sorted(reports, key=lambda r: (-r.macro_avg, r.config_label))
    best = rows[0].macro_avg

    header = ["config"] + languages + ["avg", "delta"]
    lines = ["\t".join(header)]
    for report in rows:
        cells = [report.config_label or "(unnamed)"]
        for language in languages:
            value = report.per_language.get(language)
            cells.append("-" if value is None else f"{value:.4f}")
        cells.append(f"{report.macro_avg:.4f}")
        cells.append(f"{report.macro_avg - best:+.4f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
