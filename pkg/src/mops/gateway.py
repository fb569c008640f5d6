"""Chat-completion gateway: one retry/rate-limit front door, two backends.

The live backend speaks the OpenAI-compatible chat-completions HTTP
contract. The scripted backend replays canned replies (by order or by
request tag) so every pipeline stage can run offline and bit-reproducibly.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

log = logging.getLogger(__name__)

API_KEY_ENV = "MOPS_API_KEY"


class GatewayError(Exception):
    """Base class for completion failures."""


class CredentialError(GatewayError):
    """API key missing or rejected."""


class MalformedRequestError(GatewayError):
    """The backend rejected the request as invalid; never retried."""


class BackendRefusalError(GatewayError):
    """The backend refused to serve the request (non-transient)."""


class TransientBackendError(GatewayError):
    """Retryable failure: timeouts, rate limits, 5xx."""


class RetriesExhaustedError(GatewayError):
    """Transient failures persisted past the retry cap."""

    def __init__(self, message: str, attempts: int, last: Exception | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.last = last


class ScriptExhaustedError(GatewayError):
    """A by-order script ran out of replies."""


class UnknownTagError(GatewayError):
    """A by-tag script has no reply for the request tag."""


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    prompt: str
    temperature: float = 0.7
    max_tokens: int = 1024
    tag: str = ""

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    backend: str
    latency: float
    retries: int


class Backend(Protocol):
    name: str

    def send(self, request: CompletionRequest) -> str: ...


class ScriptedBackend:
    """Deterministic offline backend replaying a fixed script.

    ``by-order`` mode dequeues replies in sequence; ``by-tag`` mode is a
    pure lookup from request tag to reply, so replayed requests (e.g. on a
    resumed run) see the same answer again. Every request is recorded on
    ``requests`` for later assertions.
    """

    name = "scripted"

    def __init__(self, *, ordered: Sequence[str] | None = None, tagged: dict[str, str] | None = None):
        if (ordered is None) == (tagged is None):
            raise ValueError("provide exactly one of ordered replies or tagged replies")
        self._ordered = list(ordered) if ordered is not None else None
        self._tagged = dict(tagged) if tagged is not None else None
        self._cursor = 0
        self._lock = threading.Lock()
        self.requests: list[CompletionRequest] = []

    @classmethod
    def by_order(cls, replies: Sequence[str]) -> "ScriptedBackend":
        if not replies:
            raise ValueError("script must contain at least one reply")
        return cls(ordered=replies)

    @classmethod
    def by_tag(cls, replies: dict[str, str] | Sequence[tuple[str, str]]) -> "ScriptedBackend":
        if not isinstance(replies, dict):
            out: dict[str, str] = {}
            for tag, reply in replies:
                if tag in out:
                    raise ValueError(f"duplicate tag in script: {tag!r}")
                out[tag] = reply
            replies = out
        if not replies:
            raise ValueError("script must contain at least one reply")
        return cls(tagged=replies)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        mode = data.get("mode")
        replies = data.get("replies")
        if mode == "by-order" and isinstance(replies, list):
            return cls.by_order(replies)
        if mode == "by-tag" and isinstance(replies, dict):
            return cls.by_tag(replies)
        raise ValueError(f"{path}: script file needs mode by-order/by-tag and matching replies")

    def send(self, request: CompletionRequest) -> str:
        with self._lock:
            self.requests.append(request)
            if self._ordered is not None:
                if self._cursor >= len(self._ordered):
                    raise ScriptExhaustedError(
                        f"script exhausted after {len(self._ordered)} replies (tag {request.tag!r})"
                    )
                reply = self._ordered[self._cursor]
                self._cursor += 1
                return reply
            assert self._tagged is not None
            try:
                return self._tagged[request.tag]
            except KeyError:
                raise UnknownTagError(f"script has no reply for tag {request.tag!r}") from None


class LiveBackend:
    """OpenAI-compatible chat-completions backend over HTTP."""

    name = "live"

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key:
            raise CredentialError(f"no API key: set {API_KEY_ENV} or pass api_key")
        self._key = key
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._timeout = timeout
        self._session = session or requests.Session()

    def send(self, request: CompletionRequest) -> str:
        payload = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            resp = self._session.post(
                self._url,
                json=payload,
                headers={"Authorization": f"Bearer {self._key}"},
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"request failed: {exc}") from exc

        if resp.status_code in (401, 403):
            raise CredentialError(f"backend rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 400:
            raise MalformedRequestError(f"backend rejected request: {resp.text[:200]}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise BackendRefusalError(f"HTTP {resp.status_code}: {resp.text[:200]}")

        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendRefusalError(f"unparseable completion payload: {exc}") from exc
        if text is None:
            raise BackendRefusalError("completion had no message content")
        return text


class TokenBucket:
    """Requests-per-minute limiter; clock and sleep are injectable for tests."""

    def __init__(
        self,
        requests_per_minute: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self._rate = requests_per_minute / 60.0
        self._capacity = max(1.0, requests_per_minute / 60.0)
        self._tokens = self._capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


@dataclass
class RetryPolicy:
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 30.0

    def delay(self, attempt: int) -> float:
        return min(self.backoff_cap, self.backoff_base * (2**attempt))


class Gateway:
    """Front door for all completions: retry, backoff, rate and concurrency caps.

    Transient backend failures are retried up to the policy cap with
    exponential backoff; malformed requests and refusals surface immediately.
    """

    def __init__(
        self,
        backend: Backend,
        retry: RetryPolicy | None = None,
        requests_per_minute: float | None = None,
        max_in_flight: int = 4,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.retry = retry or RetryPolicy()
        self._bucket = (
            TokenBucket(requests_per_minute, clock=clock, sleep=sleep)
            if requests_per_minute
            else None
        )
        self._slots = threading.Semaphore(max_in_flight)
        self._clock = clock
        self._sleep = sleep
        self.max_in_flight = max_in_flight

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._slots:
            start = self._clock()
            last: Exception | None = None
            for attempt in range(self.retry.max_retries + 1):
                if self._bucket is not None:
                    self._bucket.acquire()
                try:
                    text = self.backend.send(request)
                except TransientBackendError as exc:
                    last = exc
                    if attempt < self.retry.max_retries:
                        delay = self.retry.delay(attempt)
                        log.debug("transient failure (tag=%s), retry in %.2fs: %s", request.tag, delay, exc)
                        self._sleep(delay)
                    continue
                return CompletionResult(
                    text=text,
                    backend=self.backend.name,
                    latency=self._clock() - start,
                    retries=attempt,
                )
            raise RetriesExhaustedError(
                f"gave up after {self.retry.max_retries + 1} attempts (tag {request.tag!r}): {last}",
                attempts=self.retry.max_retries + 1,
                last=last,
            )
