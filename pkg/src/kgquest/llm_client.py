"""Chat-completion clients: an OpenAI-compatible HTTP client and a
deterministic mock, sharing one call ledger.

The ledger counts completions per purpose (refine / direct_generate / judge);
it is the evidence for the refine-once-per-cluster economy versus the
generate-once-per-triplet baseline, so a successful completion increments its
purpose exactly once and retried attempts never double-count.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from dataclasses import dataclass

import requests

from kgquest import prompts
from kgquest.kg_store import Triplet

logger = logging.getLogger(__name__)

PURPOSES = ("refine", "direct_generate", "judge")


class LLMError(Exception):
    """Base class for client failures."""


class Timeout(LLMError):
    """Endpoint unreachable or too slow after all retry attempts."""


class RateLimited(LLMError):
    """Endpoint kept returning 429 through all retry attempts."""


class HttpError(LLMError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"HTTP {status}: {detail}" if detail else f"HTTP {status}")
        self.status = status


class EmptyCompletion(LLMError):
    """The endpoint (or mock) produced no completion text."""


class MalformedCompletion(LLMError):
    """Completion text violates the requested output format."""


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system: str
    user: str
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if not self.user:
            raise ValueError("user message must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} out of range [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency: float
    model: str

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")


class CallLedger:
    """Thread-safe per-purpose completion counters and latency totals."""

    def __init__(self):
        self._lock = threading.Lock()
        self._calls = {p: 0 for p in PURPOSES}
        self._latency = {p: 0.0 for p in PURPOSES}

    def record(self, purpose: str, latency: float) -> None:
        if purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {purpose!r}")
        with self._lock:
            self._calls[purpose] += 1
            self._latency[purpose] += latency

    def count(self, purpose: str) -> int:
        with self._lock:
            return self._calls[purpose]

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "calls": dict(self._calls),
                "latency_seconds": {p: round(v, 6) for p, v in self._latency.items()},
            }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.snapshot(), fh, indent=2, sort_keys=True)
            fh.write("\n")


_QUOTED = re.compile(r'"([^"]*)"')


class MockChatClient:
    """Deterministic stand-in for a chat endpoint.

    Modes:
      identity  - echo the last double-quoted span of the user message
                  (the question slot in the refine prompt), or the whole
                  user text when nothing is quoted;
      canned    - exact-match table keyed on the user message; unknown
                  keys raise EmptyCompletion;
      scripted  - fixed response sequence, optionally cycled; an exhausted
                  non-cycling script raises EmptyCompletion.
    """

    def __init__(
        self,
        mode: str = "identity",
        canned: dict[str, str] | None = None,
        script: list[str] | None = None,
        cycle: bool = False,
        ledger: CallLedger | None = None,
    ):
        if mode not in ("identity", "canned", "scripted"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.canned = dict(canned or {})
        self.script = list(script or [])
        self.cycle = cycle
        self.ledger = ledger if ledger is not None else CallLedger()
        self._lock = threading.Lock()
        self._cursor = 0

    def _produce(self, req: ChatRequest) -> str:
        if self.mode == "identity":
            quoted = _QUOTED.findall(req.user)
            return quoted[-1] if quoted else req.user
        if self.mode == "canned":
            try:
                return self.canned[req.user]
            except KeyError:
                raise EmptyCompletion("no canned response for request") from None
        with self._lock:
            if self._cursor >= len(self.script):
                if not (self.cycle and self.script):
                    raise EmptyCompletion("scripted responses exhausted")
                self._cursor = 0
            text = self.script[self._cursor]
            self._cursor += 1
        return text

    def complete(self, req: ChatRequest, purpose: str) -> ChatResponse:
        text = self._produce(req)
        if not text:
            raise EmptyCompletion("mock produced empty text")
        self.ledger.record(purpose, 0.0)
        return ChatResponse(text=text, latency=0.0, model=req.model)


class HttpChatClient:
    """OpenAI-compatible chat-completions client with bounded retries.

    Retries transport failures, 429s, and 5xx responses with exponential
    backoff up to ``max_attempts``; other 4xx responses fail immediately.
    A semaphore caps in-flight requests across threads.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        concurrency: int = 4,
        ledger: CallLedger | None = None,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.ledger = ledger if ledger is not None else CallLedger()
        self._session = session if session is not None else requests.Session()
        self._slots = threading.Semaphore(max(1, concurrency))

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, req: ChatRequest, purpose: str) -> ChatResponse:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        payload = {
            "model": req.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error: LLMError | None = None
        start = time.monotonic()
        for attempt in range(1, self.max_attempts + 1):
            if attempt > 1:
                time.sleep(self.backoff_base * 2 ** (attempt - 2))
            try:
                with self._slots:
                    response = self._session.post(
                        url, json=payload, headers=self._headers(), timeout=self.timeout
                    )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = Timeout(f"attempt {attempt}/{self.max_attempts}: {exc}")
                logger.warning("request failed (%s), attempt %d/%d", exc, attempt, self.max_attempts)
                continue
            if response.status_code == 429:
                last_error = RateLimited(f"attempt {attempt}/{self.max_attempts}")
                logger.warning("rate limited, attempt %d/%d", attempt, self.max_attempts)
                continue
            if response.status_code >= 500:
                last_error = HttpError(response.status_code, "server error")
                logger.warning("server error %d, attempt %d/%d", response.status_code, attempt, self.max_attempts)
                continue
            if response.status_code != 200:
                raise HttpError(response.status_code, response.text[:200])
            try:
                text = response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise EmptyCompletion(f"unparseable completion payload: {exc}") from exc
            if not text:
                raise EmptyCompletion("endpoint returned empty completion")
            latency = time.monotonic() - start
            self.ledger.record(purpose, latency)
            return ChatResponse(text=text, latency=latency, model=req.model)
        assert last_error is not None
        raise last_error


def direct_generate_question(
    triplet: Triplet,
    client,
    model: str,
    temperature: float = 0.0,
    max_tokens: int = 128,
) -> str:
    """One LLM call that writes a question straight from a triple.

    This is the per-triplet comparison baseline: generating a whole dataset
    this way costs one call per triplet, versus one refine call per cluster.
    """
    req = ChatRequest(
        model=model,
        system=prompts.DIRECT_GENERATE_SYSTEM,
        user=prompts.direct_generate_user(triplet.subject, triplet.relation, triplet.object),
        temperature=temperature,
        max_tokens=max_tokens,
    )
    response = client.complete(req, "direct_generate")
    text = response.text.strip()
    if "\n" in text:
        raise MalformedCompletion(f"expected a single line, got {len(text.splitlines())} lines")
    if not text.endswith("?"):
        raise MalformedCompletion(f"question does not end with '?': {text!r}")
    return text
