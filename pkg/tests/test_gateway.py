"""Gateway contract: retries, accounting, and mock determinism."""

from __future__ import annotations

import threading

import httpx
import pytest

from agrivqa.errors import BackendRejectionError, ConfigError, MockScriptExhaustedError, TransportError
from agrivqa.gateway import (
    BackoffPolicy,
    CallLog,
    ChatRequest,
    Gateway,
    HttpBackend,
    ImagePart,
    ModelProfile,
    Turn,
    script_mock,
)

from conftest import fast_gateway

PROFILE = ModelProfile(name="test", max_retries=3)
TEXT_ONLY = ModelProfile(name="text-only", max_retries=3, supports_vision=False)


def request(text: str = "hello", profile: ModelProfile = PROFILE, tag: str = "t") -> ChatRequest:
    return ChatRequest("system", (Turn.user(text),), profile, trace_tag=tag)


def test_scripted_reply():
    gateway = fast_gateway([(None, "OK")])
    response = gateway.complete(request())
    assert response.text == "OK"
    assert response.attempts == 1


def test_fail_twice_then_reply_counts_attempts():
    gateway = fast_gateway([(None, "!transient"), (None, "!transient"), (None, "OK")])
    response = gateway.complete(request())
    assert response.text == "OK"
    assert response.attempts == 3


def test_always_failing_exhausts_after_max_retries_plus_one():
    gateway = fast_gateway([(None, "!transient")] * 5)
    with pytest.raises(TransportError) as err:
        gateway.complete(request())
    assert err.value.attempts == 4  # max_retries 3 -> 4 total attempts


def test_fatal_failure_not_retried():
    gateway = fast_gateway([(None, "!fatal"), (None, "never used")])
    with pytest.raises(BackendRejectionError):
        gateway.complete(request())
    assert gateway.backend.remaining() == 1


def test_substring_routing():
    gateway = fast_gateway([
        ("Question:", "routed answer"),
        (None, "caption text"),
    ])
    assert gateway.complete(request("describe the image")).text == "caption text"
    gateway2 = fast_gateway([
        ("Question:", "routed answer"),
        (None, "caption text"),
    ])
    assert gateway2.complete(request("Question: is it sick?")).text == "routed answer"


def test_exhausted_script_is_terminal():
    gateway = fast_gateway([(None, "hello")])
    gateway.complete(request())
    with pytest.raises(MockScriptExhaustedError):
        gateway.complete(request())


def test_empty_script_rejected():
    with pytest.raises(ConfigError):
        script_mock([])


def test_accounting_one_entry_per_complete_call():
    log = CallLog()
    gateway = fast_gateway(
        [(None, "a"), (None, "!transient"), (None, "b")], log=log
    )
    gateway.complete(request(tag="q1/caption"))
    gateway.complete(request(tag="q1/judge"))
    assert len(log) == 2
    assert log.count_tagged("q1/") == 2
    entries = log.entries()
    assert entries[0].attempts == 1
    assert entries[1].attempts == 2  # one transient retry inside a single call


def test_failed_call_still_logged():
    log = CallLog()
    gateway = fast_gateway([(None, "!transient")] * 4, log=log)
    with pytest.raises(TransportError):
        gateway.complete(request(tag="q1/x"))
    assert len(log) == 1
    assert log.entries()[0].ok is False


def test_mock_determinism_same_script_same_responses():
    script = [("alpha", "A"), ("beta", "B"), (None, "C")]
    calls = ["alpha please", "beta please", "gamma"]

    def run() -> tuple[list[str], list[tuple[str, int]]]:
        log = CallLog()
        gateway = fast_gateway(list(script), log=log)
        texts = [gateway.complete(request(c, tag=c)).text for c in calls]
        return texts, [(e.trace_tag, e.attempts) for e in log.entries()]

    assert run() == run()


def test_retry_monotonicity_under_random_failure_scripts():
    import random

    rng = random.Random(7)
    for _ in range(50):
        failures = rng.randint(0, 6)
        script = [(None, "!transient")] * failures + [(None, "ok")] * 2
        log = CallLog()
        gateway = fast_gateway(script, log=log)
        try:
            response = gateway.complete(request())
            assert response.attempts <= PROFILE.max_retries + 1
        except TransportError as err:
            assert err.attempts == PROFILE.max_retries + 1
        for entry in log.entries():
            assert entry.attempts <= PROFILE.max_retries + 1


def test_vision_rejection_for_text_only_profile():
    with pytest.raises(BackendRejectionError):
        ChatRequest(
            "s", (Turn.user(ImagePart("leaf.jpg")),), TEXT_ONLY, trace_tag="t"
        )


def test_request_needs_a_user_turn():
    with pytest.raises(ConfigError):
        ChatRequest("s", (Turn.assistant("hi"),), PROFILE)


def test_profile_validation():
    with pytest.raises(ConfigError):
        ModelProfile(name="bad", top_p=0.0)
    with pytest.raises(ConfigError):
        ModelProfile(name="bad", max_retries=-1)
    with pytest.raises(ConfigError):
        ModelProfile(name="bad", reasoning_effort="extreme")


def test_concurrent_completes_all_logged():
    log = CallLog()
    gateway = fast_gateway([(None, "ok")] * 16, log=log)
    threads = [
        threading.Thread(target=lambda i=i: gateway.complete(request(tag=f"q{i}")))
        for i in range(16)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(log) == 16
    assert {e.trace_tag for e in log.entries()} == {f"q{i}" for i in range(16)}


def test_backoff_delays_double_with_jitter_bounds():
    policy = BackoffPolicy(initial=1.0, jitter=0.2)
    for i in range(4):
        delay = policy.delay(i)
        assert 0.8 * 2**i <= delay <= 1.2 * 2**i


# -- HTTP adapter ------------------------------------------------------------


def http_gateway(handler) -> Gateway:
    transport = httpx.MockTransport(handler)
    backend = HttpBackend("https://llm.example/v1", client=httpx.Client(transport=transport))
    return Gateway(backend, backoff=BackoffPolicy(initial=0, sleep=lambda _s: None))


def test_http_backend_success_and_usage():
    def handler(req: httpx.Request) -> httpx.Response:
        assert req.url.path.endswith("/chat/completions")
        return httpx.Response(
            200,
            json={
                "choices": [{"message": {"content": "fine"}}],
                "usage": {"prompt_tokens": 10, "completion_tokens": 3},
            },
        )

    response = http_gateway(handler).complete(request())
    assert response.text == "fine"
    assert response.token_usage == (10, 3)


def test_http_backend_retries_5xx_then_succeeds():
    state = {"n": 0}

    def handler(_req: httpx.Request) -> httpx.Response:
        state["n"] += 1
        if state["n"] < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    response = http_gateway(handler).complete(request())
    assert response.attempts == 3


def test_http_backend_auth_failure_is_terminal():
    def handler(_req: httpx.Request) -> httpx.Response:
        return httpx.Response(401, text="bad key")

    with pytest.raises(BackendRejectionError):
        http_gateway(handler).complete(request())


def test_http_backend_sends_image_parts(monkeypatch):
    captured = {}

    def handler(req: httpx.Request) -> httpx.Response:
        import json

        captured.update(json.loads(req.content))
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gateway = http_gateway(handler)
    gateway.complete(
        ChatRequest("sys", (Turn.user("look", ImagePart("leaf.jpg")),), PROFILE)
    )
    user = captured["messages"][-1]
    assert {p["type"] for p in user["content"]} == {"text", "image_url"}
