"""Chat-endpoint clients for the two LLM roles: post translation and reranking.

Both roles talk to an OpenAI-style JSON chat-completion endpoint
(POST {base_url}/chat/completions with {model, messages, temperature}); the
endpoint is configured, never hardcoded to a vendor. Responses are cached on
disk keyed by content hash so interrupted batch runs resume without repeat
calls, and every per-item failure degrades to a fallback instead of aborting
the batch. Only configuration problems (bad URL, missing API key variable)
abort.

``mock:`` base URLs select a deterministic offline client, which is how the
test suite and dry runs exercise the pipeline without a network.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

from .corpus import Post, SelectorMode, TextSelector, select_text
from .rankings import Ranking, Stage

logger = logging.getLogger(__name__)

# Bump when a template changes: cache keys include it, so edits invalidate
# stale cached responses.
TEMPLATE_VERSION = "v1"

TRANSLATION_PROMPT = """You are given text (possibly noisy social media data) that may be partially or entirely in a non-English language. It could contain repeated emojis, excessive punctuation, or minor errors.
Your task is to produce a “cleaned but faithful” English version. Specifically:
1) If the text is not in English, translate it to English as literally as possible.
2) Preserve important meaning, tone, and references (e.g., named entities, hashtags, or domain-specific terms).
3) Remove or reduce meaningless filler (like repeated punctuation or stray symbols) without losing factual content.
4) Avoid adding your own commentary, opinions, or extra interpretation. Keep the style and intent aligned with the original."""

RERANK_PROMPT_TEMPLATE = """## You are an expert fact-checker and information retrieval specialist. Your task is to analyze a query and a set of articles to identify the most relevant ones for fact-checking purposes.

## Task:
1. Review the query that needs fact-checking
2. Analyze the candidate articles provided
3. Select the 10 most relevant articles that would be most useful for fact-checking the query
4. Return ONLY the article IDs of these 10 articles in a tab-separated format

## Important Instructions:
- Focus on selecting articles that:
  * Directly address the claim in the query
  * Provide factual evidence or counter-evidence
  * Come from reliable sources
  * Contain specific details relevant to the query
  * Cover different aspects of the claim for comprehensive fact-checking
- Output format must be EXACTLY:
  * Only article IDs
  * Tab-separated
  * One line only
  * Top 10 articles in order of relevance
  * No explanations or additional text

## Query for fact-checking: ***QUERY***
## Data Augmentations:  ***AUGMENTATION***
## Candidate Articles:
***ARTICLES***
ONLY RETURN tab-seperated IDs....NOTHING ELSE"""

MAX_RERANK_CANDIDATES = 50
MAX_RERANK_RESULTS = 10


class LlmError(Exception):
    pass


class ConfigurationError(LlmError):
    """Endpoint misconfiguration; aborts instead of degrading."""


class TransportError(LlmError):
    """Network or model failure after retries; callers fall back."""


@dataclass(frozen=True)
class ChatEndpointConfig:
    base_url: str
    model_name: str
    api_key_env_var: str = ""
    timeout: float = 60.0
    max_retries: int = 2
    max_concurrent_requests: int = 4
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigurationError("base_url must be set")
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.max_concurrent_requests < 1:
            raise ConfigurationError("max_concurrent_requests must be >= 1")


class ChatClient(Protocol):
    model_name: str

    def complete(self, prompt: str) -> str:
        """Send one prompt, return the model's text response."""
        ...


class HttpChatClient:
    """Chat-completion client with bounded concurrency and retry backoff."""

    def __init__(self, config: ChatEndpointConfig):
        self.config = config
        self.model_name = config.model_name
        self._url = config.base_url.rstrip("/") + "/chat/completions"
        self._semaphore = threading.BoundedSemaphore(config.max_concurrent_requests)
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env_var:
            key = os.environ.get(self.config.api_key_env_var)
            if not key:
                raise ConfigurationError(
                    f"environment variable {self.config.api_key_env_var!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str) -> str:
        headers = self._headers()
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(min(0.5 * 2 ** (attempt - 1), 8.0))
            try:
                with self._semaphore:
                    response = self._session.post(
                        self._url, json=payload, headers=headers, timeout=self.config.timeout
                    )
                response.raise_for_status()
                data = response.json()
                return str(data["choices"][0]["message"]["content"])
            except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
                last_error = exc
                logger.warning(
                    "chat call failed (attempt %d/%d): %s",
                    attempt + 1, self.config.max_retries + 1, exc,
                )
        raise TransportError(f"chat endpoint failed after retries: {last_error}")


_ID_LINE_RE = re.compile(r"^ID: (.*)$", re.MULTILINE)


class MockChatClient:
    """Deterministic offline stand-in selected by mock: base URLs.

    Modes: "identity" echoes the translated text / keeps candidate order,
    "reverse" reverses the candidate order, "garbage" returns unparseable
    prose, "error" raises TransportError on every call.
    """

    def __init__(self, mode: str = "identity"):
        if mode not in {"identity", "reverse", "garbage", "error"}:
            raise ConfigurationError(f"unknown mock client mode {mode!r}")
        self.mode = mode
        self.model_name = f"mock:{mode}"
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        if self.mode == "error":
            raise TransportError("mock client configured to fail")
        if prompt.startswith("## You are an expert fact-checker"):
            ids = _ID_LINE_RE.findall(prompt)
            if self.mode == "garbage":
                return "Sure! Here are some articles you might like."
            if self.mode == "reverse":
                ids = ids[::-1]
            return "\t".join(ids[:MAX_RERANK_RESULTS])
        # Translation role: return the post text unchanged (identity) or a
        # marker for garbage mode.
        body = prompt[len(TRANSLATION_PROMPT):].strip() if prompt.startswith(TRANSLATION_PROMPT) else prompt
        if self.mode == "garbage":
            return "As an AI language model, I translated nothing."
        return body


def make_chat_client(config: ChatEndpointConfig) -> ChatClient:
    if config.base_url.startswith("mock:"):
        return MockChatClient(config.base_url[len("mock:"):] or "identity")
    return HttpChatClient(config)


class ResponseCache:
    """Content-addressed on-disk cache: one file per key, raw response bytes."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(model_name: str, text: str) -> str:
        digest = hashlib.sha256(
            f"{TEMPLATE_VERSION}\x00{model_name}\x00{text}".encode("utf-8")
        )
        return digest.hexdigest()

    def get(self, key: str) -> str | None:
        path = self.directory / key
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, key: str, value: str) -> None:
        # Write-then-rename keeps concurrent writers safe; identical keys hold
        # identical values at temperature 0, so last-writer-wins is harmless.
        tmp = self.directory / f".{key}.tmp{os.getpid()}"
        tmp.write_text(value, encoding="utf-8")
        os.replace(tmp, self.directory / key)


@dataclass
class BatchStats:
    """Counters shared across one batch of translate/rerank calls."""

    requests: int = 0
    cache_hits: int = 0
    fallbacks: int = 0
    fallback_ids: list[str] = field(default_factory=list)

    def record_fallback(self, item_id: str) -> None:
        self.fallbacks += 1
        self.fallback_ids.append(item_id)


def build_translation_prompt(post_text: str) -> str:
    """Instruction block verbatim, then the post text as the user content."""
    if not post_text:
        raise ValueError("post text must be non-empty")
    return TRANSLATION_PROMPT + "\n\n" + post_text


_TRANSLATE_SELECTOR = TextSelector(mode=SelectorMode.ORIGINAL_PLUS_OCR)


def translate_post(
    client: ChatClient,
    post: Post,
    cache: ResponseCache | None = None,
    stats: BatchStats | None = None,
) -> str:
    """Translate one post's original(+OCR) text to English.

    Cache hits skip the network entirely. When retries are exhausted the
    original text comes back unchanged and the post id is flagged in ``stats``;
    a batch never aborts on a per-post failure.
    """
    stats = stats if stats is not None else BatchStats()
    source_text = select_text(post, _TRANSLATE_SELECTOR)
    key = ResponseCache.key_for(client.model_name, source_text)
    if cache is not None:
        cached = cache.get(key)
        if cached is not None:
            stats.cache_hits += 1
            return cached.strip()
    prompt = build_translation_prompt(source_text)
    try:
        stats.requests += 1
        raw = client.complete(prompt)
    except TransportError:
        logger.warning("translation fell back to original text for post %r", post.id)
        stats.record_fallback(post.id)
        return source_text
    if cache is not None:
        cache.put(key, raw)
    return raw.strip()


@dataclass(frozen=True)
class RerankRequest:
    query_text: str
    candidates: tuple[tuple[str, str], ...]  # (doc_id, doc_text), retrieval order
    augmentation_text: str | None = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("rerank request needs at least one candidate")
        if len(self.candidates) > MAX_RERANK_CANDIDATES:
            raise ValueError(f"at most {MAX_RERANK_CANDIDATES} candidates allowed")
        ids = [doc_id for doc_id, _ in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate ids must be unique")

    def candidate_ids(self) -> set[str]:
        return {doc_id for doc_id, _ in self.candidates}


class ParseStatus(str, enum.Enum):
    CLEAN = "clean"
    REPAIRED = "repaired"
    FAILED = "failed"


@dataclass(frozen=True)
class RerankResponse:
    ranked_ids: tuple[str, ...]
    raw_text: str
    parse_status: ParseStatus


def build_rerank_prompt(request: RerankRequest) -> str:
    """Fill the rerank template slots; candidates render as ID/TEXT blocks."""
    articles = "\n".join(
        f"ID: {doc_id}\nTEXT: {doc_text}" for doc_id, doc_text in request.candidates
    )
    prompt = RERANK_PROMPT_TEMPLATE
    prompt = prompt.replace("***QUERY***", request.query_text)
    prompt = prompt.replace("***AUGMENTATION***", request.augmentation_text or "")
    prompt = prompt.replace("***ARTICLES***", articles)
    return prompt


def parse_rerank_response(raw: str, candidate_ids: set[str]) -> RerankResponse:
    """Parse a tab-separated id line, repairing looser formats when needed.

    Tab-splitting is the expected format; if it yields fewer than two tokens
    the repair pass re-splits on commas/whitespace/newlines. Tokens outside
    the candidate set are dropped, duplicates keep their first occurrence, and
    the result is capped at 10 ids. ``clean`` means the tab pass was taken
    verbatim with nothing dropped, deduped, or truncated.
    """
    primary = [token.strip() for token in raw.split("\t")]
    primary = [token for token in primary if token]
    if len(primary) >= 2:
        tokens = primary
        repaired = False
    else:
        tokens = [token for token in re.split(r"[,\s]+", raw.strip()) if token]
        repaired = True

    ranked: list[str] = []
    for token in tokens:
        if token in candidate_ids and token not in ranked:
            ranked.append(token)
        if len(ranked) == MAX_RERANK_RESULTS:
            break
    if not ranked:
        return RerankResponse((), raw, ParseStatus.FAILED)
    if not repaired and ranked == tokens:
        return RerankResponse(tuple(ranked), raw, ParseStatus.CLEAN)
    return RerankResponse(tuple(ranked), raw, ParseStatus.REPAIRED)


def rerank(
    client: ChatClient,
    request: RerankRequest,
    base_ranking: Ranking,
    cache: ResponseCache | None = None,
    stats: BatchStats | None = None,
) -> Ranking:
    """Rerank the candidates with the LLM, falling back to the base top 10.

    A parsed response becomes a Ranking with synthetic 1/position scores (the
    prompt returns ids only). Transport failures and unparseable responses
    return the base ranking truncated to 10, marked as a fallback; the result
    is never empty while the base ranking is non-empty.
    """
    stats = stats if stats is not None else BatchStats()
    base_ids = set(base_ranking.doc_ids())
    uncovered = request.candidate_ids() - base_ids
    if uncovered:
        raise ValueError(f"base ranking does not cover candidates: {sorted(uncovered)[:5]!r}")

    prompt = build_rerank_prompt(request)
    key = ResponseCache.key_for(client.model_name, prompt)
    raw: str | None = None
    if cache is not None:
        raw = cache.get(key)
        if raw is not None:
            stats.cache_hits += 1
    if raw is None:
        try:
            stats.requests += 1
            raw = client.complete(prompt)
            if cache is not None:
                cache.put(key, raw)
        except TransportError:
            raw = None

    if raw is not None:
        parsed = parse_rerank_response(raw, request.candidate_ids())
        if parsed.parse_status is not ParseStatus.FAILED:
            entries = tuple(
                (doc_id, 1.0 / position)
                for position, doc_id in enumerate(parsed.ranked_ids, start=1)
            )
            return Ranking(base_ranking.query_id, entries, Stage.RERANKED)

    logger.warning("rerank fell back to base ranking for query %r", base_ranking.query_id)
    stats.record_fallback(base_ranking.query_id)
    return Ranking(
        base_ranking.query_id,
        base_ranking.entries[:MAX_RERANK_RESULTS],
        Stage.RERANKED,
        fallback=True,
    )
