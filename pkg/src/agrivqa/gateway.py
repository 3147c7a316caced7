"""Backend-agnostic chat completion with retry, accounting, and a scripted mock.

The pipeline only ever talks to ``Gateway.complete``; backends implement a
single ``send`` method. The mock backend replays a deterministic script so
the whole pipeline is testable offline.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol, Sequence

import httpx

from .errors import BackendRejectionError, ConfigError, MockScriptExhaustedError, TransportError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelProfile:
    """Generation parameters and policy for one model role."""

    name: str
    temperature: float = 0.5
    top_p: float = 1.0
    max_tokens: int = 400
    timeout: float = 30.0
    max_retries: int = 3
    reasoning_effort: str | None = None
    verbosity: str | None = None
    supports_vision: bool = True

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("profile name must be non-empty")
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ConfigError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens <= 0:
            raise ConfigError(f"max_tokens must be positive, got {self.max_tokens}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")
        for opt in ("reasoning_effort", "verbosity"):
            value = getattr(self, opt)
            if value is not None and value not in ("low", "medium", "high"):
                raise ConfigError(f"{opt} must be low/medium/high, got {value!r}")


# Shipped defaults matching the conditions the pipeline was tuned under.
DEFAULT_PROFILES: dict[str, ModelProfile] = {
    "qwen-vl-chat": ModelProfile(
        name="qwen-vl-chat",
        temperature=0.5,
        max_tokens=400,
        top_p=0.8,
        max_retries=3,
        supports_vision=True,
    ),
    "gpt-5-nano": ModelProfile(
        name="gpt-5-nano",
        temperature=0.5,
        reasoning_effort="medium",
        verbosity="low",
        timeout=30.0,
        max_retries=3,
        supports_vision=True,
    ),
    # Judge runs text-only at temperature 0.
    "judge": ModelProfile(
        name="judge",
        temperature=0.0,
        max_tokens=800,
        max_retries=3,
        supports_vision=False,
    ),
}


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    """Opaque image reference; never decoded by this package."""

    ref: str


Part = TextPart | ImagePart


@dataclass(frozen=True)
class Turn:
    role: str  # "user" | "assistant"
    parts: tuple[Part, ...]

    @staticmethod
    def user(*parts: Part | str) -> "Turn":
        return Turn("user", tuple(TextPart(p) if isinstance(p, str) else p for p in parts))

    @staticmethod
    def assistant(text: str) -> "Turn":
        return Turn("assistant", (TextPart(text),))


@dataclass(frozen=True)
class ChatRequest:
    system: str
    turns: tuple[Turn, ...]
    profile: ModelProfile
    trace_tag: str = ""

    def __post_init__(self) -> None:
        if not any(t.role == "user" for t in self.turns):
            raise ConfigError("request must contain at least one user turn")
        for turn in self.turns:
            if turn.role not in ("user", "assistant"):
                raise ConfigError(f"unknown turn role {turn.role!r}")
        if self.has_image_parts() and not self.profile.supports_vision:
            raise BackendRejectionError(
                f"profile {self.profile.name!r} does not accept image parts"
            )

    def has_image_parts(self) -> bool:
        return any(isinstance(p, ImagePart) for t in self.turns for p in t.parts)

    def rendered_text(self) -> str:
        """Flatten system + turns into one text blob (mock matching, hashing)."""
        pieces = [self.system]
        for turn in self.turns:
            for part in turn.parts:
                if isinstance(part, TextPart):
                    pieces.append(f"{turn.role}: {part.text}")
                else:
                    pieces.append(f"{turn.role}: [image:{part.ref}]")
        return "\n".join(pieces)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.rendered_text().encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ChatResponse:
    text: str
    attempts: int
    latency: float
    token_usage: tuple[int, int] | None = None  # (prompt, completion)


@dataclass(frozen=True)
class CallRecord:
    trace_tag: str
    profile: str
    attempts: int
    latency: float
    ok: bool
    error: str | None = None
    token_usage: tuple[int, int] | None = None


class CallLog:
    """Append-only, thread-safe accounting of every complete() invocation."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: list[CallRecord] = []

    def append(self, entry: CallRecord) -> None:
        with self._lock:
            self._entries.append(entry)

    def entries(self) -> list[CallRecord]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def count_tagged(self, prefix: str) -> int:
        """Number of calls whose trace_tag starts with the given prefix."""
        with self._lock:
            return sum(1 for e in self._entries if e.trace_tag.startswith(prefix))

    def to_dicts(self) -> list[dict[str, Any]]:
        return [
            {
                "trace_tag": e.trace_tag,
                "profile": e.profile,
                "attempts": e.attempts,
                "latency": e.latency,
                "ok": e.ok,
                "error": e.error,
                "token_usage": list(e.token_usage) if e.token_usage else None,
            }
            for e in self.entries()
        ]


class TransientBackendFailure(Exception):
    """Timeout, HTTP 5xx, or rate limit; eligible for retry."""


class FatalBackendFailure(Exception):
    """Auth failure, bad request, or mock exhaustion; never retried."""


@dataclass(frozen=True)
class BackendReply:
    text: str
    token_usage: tuple[int, int] | None = None


class Backend(Protocol):
    def send(self, request: ChatRequest) -> BackendReply: ...


@dataclass
class BackoffPolicy:
    """Exponential backoff: initial delay doubling per retry, +/-20% jitter."""

    initial: float = 1.0
    factor: float = 2.0
    jitter: float = 0.2
    sleep: Callable[[float], None] = time.sleep
    rng: random.Random = field(default_factory=random.Random)

    def delay(self, retry_index: int) -> float:
        base = self.initial * (self.factor**retry_index)
        return base * (1 + self.rng.uniform(-self.jitter, self.jitter))

    def wait(self, retry_index: int) -> None:
        self.sleep(self.delay(retry_index))


class Gateway:
    """Routes requests to a backend with retry policy and call accounting."""

    def __init__(self, backend: Backend, log: CallLog | None = None, backoff: BackoffPolicy | None = None):
        self.backend = backend
        self.log = log if log is not None else CallLog()
        self.backoff = backoff if backoff is not None else BackoffPolicy()

    def complete(self, request: ChatRequest) -> ChatResponse:
        """Send a request; retry transient failures up to profile.max_retries.

        Every invocation is appended to the call log exactly once, success
        or failure, keyed by the request's trace_tag.
        """
        profile = request.profile
        started = time.monotonic()
        attempts = 0
        last_failure: Exception | None = None
        while attempts <= profile.max_retries:
            attempts += 1
            try:
                reply = self.backend.send(request)
            except TransientBackendFailure as exc:
                last_failure = exc
                logger.debug(
                    "transient failure on %s attempt %d/%d: %s",
                    request.trace_tag,
                    attempts,
                    profile.max_retries + 1,
                    exc,
                )
                if attempts <= profile.max_retries:
                    self.backoff.wait(attempts - 1)
                continue
            except FatalBackendFailure as exc:
                latency = time.monotonic() - started
                self.log.append(
                    CallRecord(request.trace_tag, profile.name, attempts, latency, False, str(exc))
                )
                raise BackendRejectionError(str(exc)) from exc
            latency = time.monotonic() - started
            self.log.append(
                CallRecord(
                    request.trace_tag, profile.name, attempts, latency, True,
                    token_usage=reply.token_usage,
                )
            )
            return ChatResponse(reply.text, attempts, latency, reply.token_usage)

        latency = time.monotonic() - started
        self.log.append(
            CallRecord(request.trace_tag, profile.name, attempts, latency, False, str(last_failure))
        )
        raise TransportError(
            f"backend failed after {attempts} attempts: {last_failure}", attempts
        )


# ---------------------------------------------------------------------------
# Scripted mock backend
# ---------------------------------------------------------------------------

MATCH_ANY = None


@dataclass
class MockEntry:
    """One scripted reply: matches by literal substring (or anything)."""

    match: str | None  # substring of the rendered prompt; None matches all
    reply: str | None = None
    fail: str | None = None  # "transient" | "fatal"

    def matches(self, rendered: str) -> bool:
        return self.match is None or self.match in rendered


class MockBackend:
    """Deterministic scripted backend for offline tests.

    Each request consumes, in script order, the first unconsumed entry whose
    rule matches the rendered prompt. A request that matches nothing is a
    test-authoring bug and raises a terminal error. Consumption is
    serialized, so concurrent callers see one consistent script state.
    """

    def __init__(self, script: Sequence[MockEntry]):
        if not script:
            raise ConfigError("mock script must be non-empty")
        self._entries = list(script)
        self._consumed = [False] * len(self._entries)
        self._lock = threading.Lock()

    def send(self, request: ChatRequest) -> BackendReply:
        rendered = request.rendered_text()
        with self._lock:
            for i, entry in enumerate(self._entries):
                if self._consumed[i] or not entry.matches(rendered):
                    continue
                self._consumed[i] = True
                if entry.fail == "transient":
                    raise TransientBackendFailure(f"scripted transient failure (entry {i})")
                if entry.fail == "fatal":
                    raise FatalBackendFailure(f"scripted fatal failure (entry {i})")
                return BackendReply(entry.reply or "")
        raise MockScriptExhaustedError(
            f"no unconsumed script entry matches request tagged {request.trace_tag!r} "
            f"(prompt starts: {rendered[:80]!r})"
        )

    def remaining(self) -> int:
        with self._lock:
            return self._consumed.count(False)


def script_mock(script: Iterable[tuple[str | None, str] | MockEntry]) -> MockBackend:
    """Build a MockBackend from (match, reply) tuples or MockEntry objects.

    A reply string beginning with "!transient" or "!fatal" scripts a failure.
    """
    entries: list[MockEntry] = []
    for item in script:
        if isinstance(item, MockEntry):
            entries.append(item)
            continue
        match, reply = item
        if reply == "!transient" or reply == "!fatal":
            entries.append(MockEntry(match, fail=reply[1:]))
        else:
            entries.append(MockEntry(match, reply=reply))
    return MockBackend(entries)


# ---------------------------------------------------------------------------
# HTTP backend (chat-completion wire protocol)
# ---------------------------------------------------------------------------


class HttpBackend:
    """Adapter for an OpenAI-style chat-completions HTTP endpoint.

    The API key is read from the environment variable named in the config;
    provider-specific quirks stay inside this adapter.
    """

    RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})

    def __init__(self, endpoint: str, api_key_env: str = "AGRIVQA_API_KEY",
                 client: httpx.Client | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.api_key_env = api_key_env
        self._client = client or httpx.Client()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    @staticmethod
    def _part_payload(part: Part) -> dict[str, Any]:
        if isinstance(part, TextPart):
            return {"type": "text", "text": part.text}
        return {"type": "image_url", "image_url": {"url": part.ref}}

    def _messages(self, request: ChatRequest) -> list[dict[str, Any]]:
        messages: list[dict[str, Any]] = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        for turn in request.turns:
            if len(turn.parts) == 1 and isinstance(turn.parts[0], TextPart):
                content: Any = turn.parts[0].text
            else:
                content = [self._part_payload(p) for p in turn.parts]
            messages.append({"role": turn.role, "content": content})
        return messages

    def send(self, request: ChatRequest) -> BackendReply:
        profile = request.profile
        payload: dict[str, Any] = {
            "model": profile.name,
            "messages": self._messages(request),
            "temperature": profile.temperature,
            "top_p": profile.top_p,
            "max_tokens": profile.max_tokens,
        }
        if profile.reasoning_effort:
            payload["reasoning_effort"] = profile.reasoning_effort
        if profile.verbosity:
            payload["verbosity"] = profile.verbosity
        try:
            response = self._client.post(
                f"{self.endpoint}/chat/completions",
                json=payload,
                headers=self._headers(),
                timeout=profile.timeout,
            )
        except httpx.TimeoutException as exc:
            raise TransientBackendFailure(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientBackendFailure(f"transport: {exc}") from exc

        if response.status_code in self.RETRYABLE_STATUS:
            raise TransientBackendFailure(f"HTTP {response.status_code}")
        if response.status_code >= 400:
            raise FatalBackendFailure(f"HTTP {response.status_code}: {response.text[:200]}")

        body = response.json()
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise FatalBackendFailure(f"malformed completion payload: {exc}") from exc
        usage = body.get("usage")
        token_usage = None
        if isinstance(usage, dict):
            prompt = usage.get("prompt_tokens")
            completion = usage.get("completion_tokens")
            if isinstance(prompt, int) and isinstance(completion, int):
                token_usage = (prompt, completion)
        return BackendReply(text if isinstance(text, str) else "", token_usage)
