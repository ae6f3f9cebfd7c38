import re
from pathlib import Path

import pytest
import requests
from hypothesis import given, strategies as st

from claimrank.corpus import Post
from claimrank.llm import (
    BatchStats,
    ChatEndpointConfig,
    ConfigurationError,
    HttpChatClient,
    MockChatClient,
    ParseStatus,
    RERANK_PROMPT_TEMPLATE,
    RerankRequest,
    ResponseCache,
    TRANSLATION_PROMPT,
    TransportError,
    build_rerank_prompt,
    build_translation_prompt,
    make_chat_client,
    parse_rerank_response,
    rerank,
    translate_post,
)
from claimrank.rankings import Ranking, Stage

GOLDEN = Path(__file__).parent / "data" / "golden"


class RecordingClient:
    """Fake chat client with scripted responses."""

    model_name = "fake-model"

    def __init__(self, responses=None, error: Exception | None = None):
        self.responses = list(responses or [])
        self.error = error
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        if self.error is not None:
            raise self.error
        return self.responses.pop(0) if self.responses else "ok"


def base_ranking(ids, query_id="q1"):
    n = len(ids)
    return Ranking(query_id, tuple((d, float(n - i)) for i, d in enumerate(ids)), Stage.DENSE)


# --- prompt templates ---

def test_translation_prompt_matches_golden_file():
    assert TRANSLATION_PROMPT.encode("utf-8") == (GOLDEN / "translation_prompt.txt").read_bytes()


def test_rerank_template_matches_golden_file():
    assert RERANK_PROMPT_TEMPLATE.encode("utf-8") == (GOLDEN / "rerank_prompt_template.txt").read_bytes()


def test_translation_prompt_contains_anchor():
    prompt = build_translation_prompt("hola mundo")
    assert "cleaned but faithful" in prompt


def test_translation_prompt_numbered_rules_verbatim():
    prompt = build_translation_prompt("any text")
    assert "1) If the text is not in English, translate it to English as literally as possible." in prompt
    assert "2) Preserve important meaning, tone, and references (e.g., named entities, hashtags, or domain-specific terms)." in prompt
    assert "3) Remove or reduce meaningless filler (like repeated punctuation or stray symbols) without losing factual content." in prompt
    assert "4) Avoid adding your own commentary, opinions, or extra interpretation. Keep the style and intent aligned with the original." in prompt


def test_translation_prompt_text_appears_once_after_instructions():
    prompt = build_translation_prompt("UNIQUE_MARKER_XYZ")
    assert prompt.count("UNIQUE_MARKER_XYZ") == 1
    assert prompt.index("UNIQUE_MARKER_XYZ") > prompt.index("aligned with the original.")


def test_translation_prompt_rejects_empty():
    with pytest.raises(ValueError):
        build_translation_prompt("")


def test_rerank_prompt_lists_candidates_in_order():
    request = RerankRequest("the query", (("c1", "text one"), ("c2", "text two"), ("c3", "text three")))
    prompt = build_rerank_prompt(request)
    blocks = re.findall(r"ID: (\w+)\nTEXT: ([^\n]+)", prompt)
    assert blocks == [("c1", "text one"), ("c2", "text two"), ("c3", "text three")]


def test_rerank_prompt_final_line_verbatim():
    request = RerankRequest("q", (("a", "t"),))
    prompt = build_rerank_prompt(request)
    assert prompt.endswith("ONLY RETURN tab-seperated IDs....NOTHING ELSE")


def test_rerank_prompt_augmentation_slot():
    with_aug = build_rerank_prompt(RerankRequest("q", (("a", "t"),), augmentation_text="ocr stuff"))
    assert "## Data Augmentations:  ocr stuff" in with_aug
    without = build_rerank_prompt(RerankRequest("q", (("a", "t"),)))
    assert "***AUGMENTATION***" not in without
    assert "***QUERY***" not in without
    assert "***ARTICLES***" not in without


def test_rerank_request_validation():
    with pytest.raises(ValueError, match="at least one"):
        RerankRequest("q", ())
    with pytest.raises(ValueError, match="unique"):
        RerankRequest("q", (("a", "x"), ("a", "y")))
    with pytest.raises(ValueError, match="at most 50"):
        RerankRequest("q", tuple((f"c{i}", "t") for i in range(51)))


# --- parsing ---

def test_parse_clean_tab_separated():
    response = parse_rerank_response("a\tb\tc", {"a", "b", "c"})
    assert response.ranked_ids == ("a", "b", "c")
    assert response.parse_status is ParseStatus.CLEAN


def test_parse_repairs_commas_and_newlines():
    response = parse_rerank_response("a, b\nc", {"a", "b", "c"})
    assert response.ranked_ids == ("a", "b", "c")
    assert response.parse_status is ParseStatus.REPAIRED


def test_parse_fails_on_garbage():
    response = parse_rerank_response("Here are the IDs: x y", {"a", "b"})
    assert response.ranked_ids == ()
    assert response.parse_status is ParseStatus.FAILED


def test_parse_drops_unknown_and_dedupes():
    response = parse_rerank_response("a\tzz\ta\tb", {"a", "b"})
    assert response.ranked_ids == ("a", "b")
    assert response.parse_status is ParseStatus.REPAIRED


def test_parse_truncates_to_ten():
    ids = [f"c{i}" for i in range(15)]
    response = parse_rerank_response("\t".join(ids), set(ids))
    assert len(response.ranked_ids) == 10
    assert response.parse_status is ParseStatus.REPAIRED


@given(st.text(max_size=200), st.sets(st.sampled_from([f"c{i}" for i in range(20)]), max_size=20))
def test_parse_invariants_under_fuzz(raw, candidates):
    response = parse_rerank_response(raw, candidates)
    assert set(response.ranked_ids) <= candidates
    assert len(set(response.ranked_ids)) == len(response.ranked_ids)
    assert len(response.ranked_ids) <= 10


# --- cache ---

def test_cache_round_trip(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    key = ResponseCache.key_for("model-x", "some text")
    assert cache.get(key) is None
    cache.put(key, "response body")
    assert cache.get(key) == "response body"
    files = list((tmp_path / "cache").iterdir())
    assert len(files) == 1
    assert re.fullmatch(r"[0-9a-f]{64}", files[0].name)


def test_cache_key_depends_on_model_and_text():
    key = ResponseCache.key_for("m1", "t1")
    assert key != ResponseCache.key_for("m2", "t1")
    assert key != ResponseCache.key_for("m1", "t2")
    assert key == ResponseCache.key_for("m1", "t1")


# --- config and clients ---

def test_endpoint_config_validation():
    with pytest.raises(ConfigurationError):
        ChatEndpointConfig(base_url="", model_name="m")
    with pytest.raises(ConfigurationError):
        ChatEndpointConfig(base_url="http://x", model_name="m", timeout=0)
    with pytest.raises(ConfigurationError):
        ChatEndpointConfig(base_url="http://x", model_name="m", max_retries=-1)
    with pytest.raises(ConfigurationError):
        ChatEndpointConfig(base_url="http://x", model_name="m", max_concurrent_requests=0)


def test_make_chat_client_selects_mock():
    client = make_chat_client(ChatEndpointConfig(base_url="mock:reverse", model_name="m"))
    assert isinstance(client, MockChatClient)
    assert client.mode == "reverse"
    with pytest.raises(ConfigurationError):
        make_chat_client(ChatEndpointConfig(base_url="mock:bogus", model_name="m"))


def test_http_client_missing_api_key_env():
    config = ChatEndpointConfig(
        base_url="http://localhost:9", model_name="m", api_key_env_var="CLAIMRANK_NO_SUCH_KEY"
    )
    client = HttpChatClient(config)
    with pytest.raises(ConfigurationError, match="CLAIMRANK_NO_SUCH_KEY"):
        client.complete("prompt")


def test_http_client_retries_then_raises(monkeypatch):
    config = ChatEndpointConfig(base_url="http://localhost:9", model_name="m", max_retries=2)
    client = HttpChatClient(config)
    calls = []

    def failing_post(url, **kwargs):
        calls.append(url)
        raise requests.ConnectionError("boom")

    monkeypatch.setattr(client._session, "post", failing_post)
    monkeypatch.setattr("claimrank.llm.time.sleep", lambda s: None)
    with pytest.raises(TransportError):
        client.complete("prompt")
    assert len(calls) == config.max_retries + 1


def test_http_client_success(monkeypatch):
    config = ChatEndpointConfig(base_url="http://api.example/v1", model_name="m")
    client = HttpChatClient(config)
    seen = {}

    class FakeResponse:
        def raise_for_status(self):
            pass

        def json(self):
            return {"choices": [{"message": {"content": "translated!"}}]}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen.update(url=url, payload=json)
        return FakeResponse()

    monkeypatch.setattr(client._session, "post", fake_post)
    assert client.complete("hello") == "translated!"
    assert seen["url"] == "http://api.example/v1/chat/completions"
    assert seen["payload"]["messages"] == [{"role": "user", "content": "hello"}]
    assert seen["payload"]["temperature"] == 0.0


# --- translate_post ---

POST = Post(id="p1", original_text="hola", ocr_text="mundo", language="spa")


def test_translate_passthrough():
    client = RecordingClient(responses=["Hello"])
    assert translate_post(client, POST) == "Hello"
    # source text is the original+OCR view
    assert client.prompts[0].endswith("hola\nmundo")


def test_translate_cache_hit_skips_network(tmp_path):
    cache = ResponseCache(tmp_path)
    client = RecordingClient(responses=["Hello there"])
    stats = BatchStats()
    first = translate_post(client, POST, cache, stats)
    second = translate_post(client, POST, cache, stats)
    assert first == second == "Hello there"
    assert len(client.prompts) == 1
    assert stats.cache_hits == 1


def test_translate_fallback_after_exhausted_retries():
    client = RecordingClient(error=TransportError("down"))
    stats = BatchStats()
    result = translate_post(client, POST, None, stats)
    assert result == "hola\nmundo"
    assert stats.fallbacks == 1
    assert stats.fallback_ids == ["p1"]


def test_translate_strips_whitespace():
    client = RecordingClient(responses=["  padded  \n"])
    assert translate_post(client, POST) == "padded"


# --- rerank ---

def request_for(ids):
    return RerankRequest("query text", tuple((d, f"text {d}") for d in ids))


def test_rerank_follows_model_order():
    ids = ["a", "b", "c", "d"]
    client = RecordingClient(responses=["d\tc\tb\ta"])
    result = rerank(client, request_for(ids), base_ranking(ids))
    assert result.doc_ids() == ["d", "c", "b", "a"]
    assert result.stage is Stage.RERANKED
    assert not result.fallback
    assert [s for _, s in result.entries] == [1.0, 1 / 2, 1 / 3, 1 / 4]


def test_rerank_garbage_falls_back_to_base_top_10():
    ids = [f"c{i:02d}" for i in range(20)]
    client = RecordingClient(responses=["no ids here at all"])
    stats = BatchStats()
    result = rerank(client, request_for(ids), base_ranking(ids), stats=stats)
    assert result.fallback
    assert result.doc_ids() == ids[:10]
    assert stats.fallbacks == 1


def test_rerank_transport_error_falls_back():
    ids = ["a", "b"]
    client = RecordingClient(error=TransportError("down"))
    result = rerank(client, request_for(ids), base_ranking(ids))
    assert result.fallback
    assert result.doc_ids() == ["a", "b"]


def test_rerank_short_response_is_not_padded():
    ids = ["a", "b", "c", "d", "e", "f"]
    client = RecordingClient(responses=["c\ta\te\tb"])
    result = rerank(client, request_for(ids), base_ranking(ids))
    assert result.doc_ids() == ["c", "a", "e", "b"]
    assert len(result) == 4


def test_rerank_requires_base_coverage():
    client = RecordingClient()
    with pytest.raises(ValueError, match="cover"):
        rerank(client, request_for(["a", "zz"]), base_ranking(["a", "b"]))


def test_rerank_never_empty_for_nonempty_base():
    ids = ["a", "b", "c"]
    for client in (RecordingClient(responses=["garbage"]), RecordingClient(error=TransportError("x"))):
        result = rerank(client, request_for(ids), base_ranking(ids))
        assert len(result) > 0


def test_rerank_uses_cache(tmp_path):
    ids = ["a", "b"]
    cache = ResponseCache(tmp_path)
    first_client = RecordingClient(responses=["b\ta"])
    first = rerank(first_client, request_for(ids), base_ranking(ids), cache)
    second_client = RecordingClient(responses=["SHOULD NOT BE USED"])
    second = rerank(second_client, request_for(ids), base_ranking(ids), cache)
    assert first.entries == second.entries
    assert second_client.prompts == []


# --- mock client ---

def test_mock_identity_rerank_keeps_order():
    client = MockChatClient("identity")
    prompt = build_rerank_prompt(request_for(["x", "y", "z"]))
    assert client.complete(prompt) == "x\ty\tz"


def test_mock_reverse_rerank():
    client = MockChatClient("reverse")
    prompt = build_rerank_prompt(request_for(["x", "y", "z"]))
    assert client.complete(prompt) == "z\ty\tx"


def test_mock_identity_translation_echoes_text():
    client = MockChatClient("identity")
    assert client.complete(build_translation_prompt("texto original")) == "texto original"


def test_mock_error_raises_transport():
    client = MockChatClient("error")
    with pytest.raises(TransportError):
        client.complete("anything")
