"""Corpus loading, validation, text selection, and per-language slicing.

Data arrives as UTF-8 JSONL, one record per line:

    posts.jsonl        {"id", "original_text", "ocr_text"?, "translated_text"?, "language"}
    fact_checks.jsonl  {"id", "claim", "title"?, "translated_claim"?, "language"}
    pairs.jsonl        {"post_id", "fact_check_id"}

Text fields are normalized at ingestion: runs of spaces/tabs collapse to one
space and ends are trimmed. Newlines are preserved and nothing is lowercased
(the dense embedding model is case-aware).
"""

from __future__ import annotations

import ast
import csv
import enum
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

logger = logging.getLogger(__name__)

# The language codes appearing in the evaluation tables. Other codes are
# accepted but surface in the corpus validation warnings.
KNOWN_LANGUAGES = frozenset(
    {"eng", "fra", "deu", "por", "spa", "tha", "msa", "ara", "tur", "pol"}
)

_LANGUAGE_RE = re.compile(r"^[a-z]{3}$")


class CorpusError(Exception):
    """Base class for corpus ingestion failures."""


class CorpusFormatError(CorpusError):
    """A line could not be parsed or violates a field invariant."""


class DuplicateIdError(CorpusError):
    """An id (or relevance pair) appears more than once."""


class DanglingReferenceError(CorpusError):
    """A relevance pair references an id that is not in the corpus."""


class EmptyTextError(CorpusError):
    """Text selection produced an empty string."""


def _normalize_text(text: str) -> str:
    # Collapse space/tab runs but keep newlines: they carry sentence
    # boundaries that embedding models use.
    return re.sub(r"[ \t]+", " ", text).strip()


def _check_language(language: str) -> str:
    if not _LANGUAGE_RE.match(language):
        raise ValueError(
            f"language must be 3 lowercase ASCII letters (ISO-639-3), got {language!r}"
        )
    return language


@dataclass(frozen=True)
class Post:
    """A social-media query item."""

    id: str
    original_text: str
    language: str
    ocr_text: str | None = None
    translated_text: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("post id must be non-empty")
        if not self.original_text and not self.ocr_text:
            raise ValueError(f"post {self.id!r}: original_text and ocr_text both empty")
        _check_language(self.language)


@dataclass(frozen=True)
class FactCheck:
    """A retrievable fact-checked claim."""

    id: str
    claim: str
    language: str
    title: str | None = None
    translated_claim: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("fact-check id must be non-empty")
        if not self.claim:
            raise ValueError(f"fact-check {self.id!r}: claim must be non-empty")
        _check_language(self.language)


@dataclass(frozen=True)
class RelevancePair:
    post_id: str
    fact_check_id: str


class SelectorMode(str, enum.Enum):
    ORIGINAL = "original"
    ORIGINAL_PLUS_OCR = "original_plus_ocr"
    TRANSLATED_WITH_FALLBACK = "translated_with_fallback"


@dataclass(frozen=True)
class TextSelector:
    """Chooses which text field represents an item downstream.

    ``include_title`` controls whether fact-check titles are prepended to the
    claim (title first, newline-separated); the dataset's choice between claim
    and claim+title embedding inputs is not fixed, so it is a switch here.
    """

    mode: SelectorMode = SelectorMode.TRANSLATED_WITH_FALLBACK
    include_title: bool = True


def select_text(item: Union[Post, FactCheck], selector: TextSelector) -> str:
    """Resolve the text view of a post or fact-check under ``selector``.

    Raises EmptyTextError when every candidate field is empty.
    """
    if isinstance(item, Post):
        text = _select_post_text(item, selector.mode)
    else:
        text = _select_fact_check_text(item, selector)
    if not text:
        raise EmptyTextError(f"no usable text for item {item.id!r} under {selector.mode.value}")
    return text


def _join_nonempty(parts: list[str | None]) -> str:
    return "\n".join(p for p in parts if p)


def _select_post_text(post: Post, mode: SelectorMode) -> str:
    if mode is SelectorMode.ORIGINAL:
        return post.original_text
    if mode is SelectorMode.ORIGINAL_PLUS_OCR:
        return _join_nonempty([post.original_text, post.ocr_text])
    if post.translated_text:
        return post.translated_text
    return _join_nonempty([post.original_text, post.ocr_text])


def _select_fact_check_text(fact_check: FactCheck, selector: TextSelector) -> str:
    claim = fact_check.claim
    if selector.mode is SelectorMode.TRANSLATED_WITH_FALLBACK and fact_check.translated_claim:
        claim = fact_check.translated_claim
    if selector.include_title and fact_check.title:
        return _join_nonempty([fact_check.title, claim])
    return claim


@dataclass(frozen=True)
class Corpus:
    """Immutable snapshot of posts, fact-checks, and gold relevance pairs."""

    posts: dict[str, Post]
    fact_checks: dict[str, FactCheck]
    pairs: tuple[RelevancePair, ...]
    validation_warnings: tuple[str, ...] = ()

    def counts(self) -> tuple[int, int, int]:
        return len(self.posts), len(self.fact_checks), len(self.pairs)

    def gold_ids(self, post_id: str) -> set[str]:
        """All gold fact-check ids for one post."""
        return {p.fact_check_id for p in self.pairs if p.post_id == post_id}

    def gold_map(self) -> dict[str, set[str]]:
        """post_id -> set of gold fact-check ids, for posts that have any."""
        gold: dict[str, set[str]] = {}
        for pair in self.pairs:
            gold.setdefault(pair.post_id, set()).add(pair.fact_check_id)
        return gold


@dataclass(frozen=True)
class LanguageSlice:
    language: str
    posts: tuple[Post, ...]
    fact_checks: tuple[FactCheck, ...]
    pairs: tuple[RelevancePair, ...]


def _read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _required(obj: dict, key: str, path: Path, lineno: int) -> str:
    if key not in obj:
        raise CorpusFormatError(f"{path}:{lineno}: missing required field {key!r}")
    value = obj[key]
    if not isinstance(value, str):
        raise CorpusFormatError(f"{path}:{lineno}: field {key!r} must be a string")
    return value


def _optional(obj: dict, key: str, path: Path, lineno: int) -> str | None:
    if key not in obj or obj[key] is None:
        return None
    value = obj[key]
    if not isinstance(value, str):
        raise CorpusFormatError(f"{path}:{lineno}: field {key!r} must be a string")
    normalized = _normalize_text(value)
    return normalized or None


def load_posts(path: str | Path) -> dict[str, Post]:
    """Load just the posts file (for stages that need no gold pairs)."""
    posts, warnings = _load_posts(Path(path))
    for warning in warnings:
        logger.warning("%s", warning)
    return posts


def load_fact_checks(path: str | Path) -> dict[str, FactCheck]:
    """Load just the fact-checks file."""
    fact_checks, warnings = _load_fact_checks(Path(path))
    for warning in warnings:
        logger.warning("%s", warning)
    return fact_checks


def _load_posts(path: Path) -> tuple[dict[str, Post], list[str]]:
    posts: dict[str, Post] = {}
    warnings: list[str] = []
    for lineno, obj in _read_jsonl(path):
        try:
            post = Post(
                id=_required(obj, "id", path, lineno).strip(),
                original_text=_normalize_text(_required(obj, "original_text", path, lineno)),
                language=_required(obj, "language", path, lineno),
                ocr_text=_optional(obj, "ocr_text", path, lineno),
                translated_text=_optional(obj, "translated_text", path, lineno),
            )
        except ValueError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
        if post.id in posts:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate post id {post.id!r}")
        if post.language not in KNOWN_LANGUAGES:
            warnings.append(f"post {post.id!r}: language {post.language!r} not in the known set")
        posts[post.id] = post
    return posts, warnings


def _load_fact_checks(path: Path) -> tuple[dict[str, FactCheck], list[str]]:
    fact_checks: dict[str, FactCheck] = {}
    warnings: list[str] = []
    for lineno, obj in _read_jsonl(path):
        try:
            fact_check = FactCheck(
                id=_required(obj, "id", path, lineno).strip(),
                claim=_normalize_text(_required(obj, "claim", path, lineno)),
                language=_required(obj, "language", path, lineno),
                title=_optional(obj, "title", path, lineno),
                translated_claim=_optional(obj, "translated_claim", path, lineno),
            )
        except ValueError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
        if fact_check.id in fact_checks:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate fact-check id {fact_check.id!r}")
        if fact_check.language not in KNOWN_LANGUAGES:
            warnings.append(
                f"fact-check {fact_check.id!r}: language {fact_check.language!r} not in the known set"
            )
        fact_checks[fact_check.id] = fact_check
    return fact_checks, warnings


def load_corpus(
    posts_path: str | Path,
    fact_checks_path: str | Path,
    pairs_path: str | Path,
) -> Corpus:
    """Load and validate the three JSONL collections.

    Each failure mode aborts with its own error class: CorpusFormatError for
    malformed lines (with 1-based line numbers), DuplicateIdError for repeated
    ids or pairs, DanglingReferenceError for pairs that do not resolve.
    """
    posts_path, fact_checks_path, pairs_path = (
        Path(posts_path), Path(fact_checks_path), Path(pairs_path),
    )
    posts, warnings = _load_posts(posts_path)
    fact_checks, fact_check_warnings = _load_fact_checks(fact_checks_path)
    warnings.extend(fact_check_warnings)

    pairs: list[RelevancePair] = []
    seen_pairs: set[tuple[str, str]] = set()
    for lineno, obj in _read_jsonl(pairs_path):
        pair = RelevancePair(
            post_id=_required(obj, "post_id", pairs_path, lineno).strip(),
            fact_check_id=_required(obj, "fact_check_id", pairs_path, lineno).strip(),
        )
        if pair.post_id not in posts:
            raise DanglingReferenceError(
                f"{pairs_path}:{lineno}: unknown post_id {pair.post_id!r}"
            )
        if pair.fact_check_id not in fact_checks:
            raise DanglingReferenceError(
                f"{pairs_path}:{lineno}: unknown fact_check_id {pair.fact_check_id!r}"
            )
        key = (pair.post_id, pair.fact_check_id)
        if key in seen_pairs:
            raise DuplicateIdError(f"{pairs_path}:{lineno}: duplicate pair {key!r}")
        seen_pairs.add(key)
        pairs.append(pair)

    corpus = Corpus(posts, fact_checks, tuple(pairs), tuple(warnings))
    logger.info(
        "loaded corpus: %d posts, %d fact-checks, %d pairs (%d warnings)",
        *corpus.counts(), len(warnings),
    )
    return corpus


def _drop_none(record: dict) -> dict:
    return {k: v for k, v in record.items() if v is not None}


def write_corpus(
    corpus: Corpus,
    posts_path: str | Path,
    fact_checks_path: str | Path,
    pairs_path: str | Path,
) -> None:
    """Persist a corpus back to the three JSONL files."""
    with Path(posts_path).open("w", encoding="utf-8", newline="\n") as fh:
        for post in corpus.posts.values():
            fh.write(json.dumps(_drop_none({
                "id": post.id,
                "original_text": post.original_text,
                "ocr_text": post.ocr_text,
                "translated_text": post.translated_text,
                "language": post.language,
            }), ensure_ascii=False) + "\n")
    with Path(fact_checks_path).open("w", encoding="utf-8", newline="\n") as fh:
        for fact_check in corpus.fact_checks.values():
            fh.write(json.dumps(_drop_none({
                "id": fact_check.id,
                "claim": fact_check.claim,
                "title": fact_check.title,
                "translated_claim": fact_check.translated_claim,
                "language": fact_check.language,
            }), ensure_ascii=False) + "\n")
    with Path(pairs_path).open("w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            fh.write(json.dumps(
                {"post_id": pair.post_id, "fact_check_id": pair.fact_check_id},
                ensure_ascii=False,
            ) + "\n")


def split_by_language(corpus: Corpus, crosslingual: bool = False) -> dict[str, LanguageSlice]:
    """Partition posts by language.

    Every post lands in exactly one slice. The fact-check pool per slice is
    same-language only by default; with ``crosslingual=True`` each slice
    searches the full pool. Pairs follow their post's slice either way.
    """
    slices: dict[str, LanguageSlice] = {}
    all_fact_checks = tuple(corpus.fact_checks.values())
    for language in dict.fromkeys(p.language for p in corpus.posts.values()):
        posts = tuple(p for p in corpus.posts.values() if p.language == language)
        post_ids = {p.id for p in posts}
        if crosslingual:
            pool = all_fact_checks
        else:
            pool = tuple(f for f in all_fact_checks if f.language == language)
        pairs = tuple(p for p in corpus.pairs if p.post_id in post_ids)
        slices[language] = LanguageSlice(language, posts, pool, pairs)
    return slices


# --- MultiClaim-style CSV conversion (best effort) ---

def _literal_pair(raw: str) -> tuple[str, str | None]:
    """Parse a CSV cell that may hold a python-literal ('original', 'english') pair.

    Returns (original, english_or_None); plain strings pass through unchanged.
    """
    raw = raw.strip()
    if raw.startswith(("(", "[")):
        try:
            value = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            return raw, None
        if isinstance(value, (tuple, list)) and value:
            original = str(value[0])
            english = str(value[1]) if len(value) > 1 and value[1] else None
            return original, english
    return raw, None


def _csv_get(row: dict, *names: str) -> str:
    for name in names:
        if name in row and row[name] is not None:
            return row[name]
    return ""


def convert_multiclaim_csv(
    posts_csv: str | Path,
    fact_checks_csv: str | Path,
    pairs_csv: str | Path,
    out_dir: str | Path,
) -> tuple[Path, Path, Path]:
    """Convert a MultiClaim-style CSV layout into the JSONL corpus files.

    Best effort: text cells holding python-literal (original, english) pairs
    are split into original/translated fields, OCR lists are joined, and a
    missing language column falls back to "und". The output is re-validated
    by load_corpus before use.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    posts_out = out_dir / "posts.jsonl"
    fact_checks_out = out_dir / "fact_checks.jsonl"
    pairs_out = out_dir / "pairs.jsonl"

    with Path(posts_csv).open("r", encoding="utf-8", newline="") as src, \
            posts_out.open("w", encoding="utf-8", newline="\n") as dst:
        for row in csv.DictReader(src):
            original, translated = _literal_pair(_csv_get(row, "text", "post_text"))
            ocr_cell = _csv_get(row, "ocr", "ocr_text")
            ocr_parts = []
            if ocr_cell:
                raw = ocr_cell.strip()
                if raw.startswith("["):
                    try:
                        for item in ast.literal_eval(raw):
                            ocr_parts.append(str(item[0]) if isinstance(item, (tuple, list)) else str(item))
                    except (ValueError, SyntaxError):
                        ocr_parts.append(raw)
                else:
                    ocr_parts.append(raw)
            record = _drop_none({
                "id": _csv_get(row, "post_id", "id"),
                "original_text": _normalize_text(original),
                "ocr_text": _normalize_text(" ".join(ocr_parts)) or None,
                "translated_text": _normalize_text(translated) if translated else None,
                "language": _csv_get(row, "language", "lang") or "und",
            })
            dst.write(json.dumps(record, ensure_ascii=False) + "\n")

    with Path(fact_checks_csv).open("r", encoding="utf-8", newline="") as src, \
            fact_checks_out.open("w", encoding="utf-8", newline="\n") as dst:
        for row in csv.DictReader(src):
            claim, translated = _literal_pair(_csv_get(row, "claim", "claim_text"))
            title, _ = _literal_pair(_csv_get(row, "title"))
            record = _drop_none({
                "id": _csv_get(row, "fact_check_id", "id"),
                "claim": _normalize_text(claim),
                "title": _normalize_text(title) or None,
                "translated_claim": _normalize_text(translated) if translated else None,
                "language": _csv_get(row, "language", "lang") or "und",
            })
            dst.write(json.dumps(record, ensure_ascii=False) + "\n")

    with Path(pairs_csv).open("r", encoding="utf-8", newline="") as src, \
            pairs_out.open("w", encoding="utf-8", newline="\n") as dst:
        for row in csv.DictReader(src):
            dst.write(json.dumps({
                "post_id": _csv_get(row, "post_id"),
                "fact_check_id": _csv_get(row, "fact_check_id"),
            }) + "\n")

    return posts_out, fact_checks_out, pairs_out
