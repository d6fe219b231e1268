"""Chat-completions client with retries, a concurrency cap, and an offline mock."""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Union

import httpx
import numpy as np

from ..errors import ConfigError, ParseError, TransportError
from .parse import ParsedPrediction, parse_response
from .prompt import PromptBundle

log = logging.getLogger(__name__)

RETRY_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})
REDACTED = "[REDACTED]"


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to call the model.

    Only the *name* of the credential's environment variable is stored;
    the secret itself is read at request time and never serialized.
    """

    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = "EOCRC_LLM_API_KEY"
    timeout: float = 60.0
    max_concurrency: int = 4
    max_attempts: int = 5
    backoff: float = 1.0
    max_backoff: float = 30.0
    jitter_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.max_concurrency < 1:
            raise ConfigError("max concurrency must be at least 1", "llm.endpoint.max_concurrency")
        if self.max_attempts < 1:
            raise ConfigError("max attempts must be at least 1", "llm.endpoint.max_attempts")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive", "llm.endpoint.timeout")
        if self.backoff < 0:
            raise ConfigError("backoff must be non-negative", "llm.endpoint.backoff")

    def credential(self) -> Optional[str]:
        return os.environ.get(self.api_key_env) or None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown endpoint fields {sorted(unknown)}", "llm.endpoint")
        return cls(**d)


class Endpoint(Protocol):
    def complete(self, bundle: PromptBundle) -> str: ...


def request_body(model: str, bundle: PromptBundle) -> dict:
    return {
        "model": model,
        "messages": bundle.messages(),
        "max_tokens": bundle.max_tokens,
        "temperature": bundle.temperature,
    }


class AuditLog:
    """Append-only JSON Lines log of request/response pairs with secrets scrubbed."""

    def __init__(self, path: Union[str, Path], secrets: Sequence[str] = ()):
        self.path = Path(path)
        self._secrets = [s for s in secrets if s]
        self._lock = threading.Lock()

    def _scrub(self, text: str) -> str:
        for s in self._secrets:
            text = text.replace(s, REDACTED)
        return text

    def write(self, record: dict) -> None:
        line = self._scrub(json.dumps(record, sort_keys=True))
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


class HttpChatEndpoint:
    """POSTs to ``{base_url}/chat/completions``.

    Transport errors and retryable statuses (429, 5xx) are retried with
    exponential backoff plus seeded jitter; ``sleep`` is injectable for tests.
    """

    def __init__(
        self,
        config: EndpointConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        audit_path: Optional[Union[str, Path]] = None,
    ):
        self.config = config
        self._client = httpx.Client(base_url=config.base_url.rstrip("/"), timeout=config.timeout, transport=transport)
        self._sleep = sleep
        self._rng = random.Random(config.jitter_seed)
        self._rng_lock = threading.Lock()
        key = config.credential()
        self._audit = AuditLog(audit_path, [key] if key else []) if audit_path else None

    def close(self) -> None:
        self._client.close()

    def _delay(self, attempt: int) -> float:
        with self._rng_lock:
            jitter = self._rng.random()
        return min(self.config.max_backoff, self.config.backoff * (2.0**attempt)) * (0.5 + 0.5 * jitter)

    def complete(self, bundle: PromptBundle) -> str:
        body = request_body(self.config.model, bundle)
        headers = {"Content-Type": "application/json"}
        key = self.config.credential()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last = "no attempt made"
        for attempt in range(self.config.max_attempts):
            try:
                resp = self._client.post("/chat/completions", json=body, headers=headers)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    text = resp.json()["choices"][0]["message"]["content"]
                    if self._audit:
                        self._audit.write({"request": body, "status": 200, "response": text, "attempt": attempt + 1})
                    return text
                last = f"HTTP {resp.status_code}"
                if self._audit:
                    self._audit.write({"request": body, "status": resp.status_code, "response": resp.text, "attempt": attempt + 1})
                if resp.status_code not in RETRY_STATUS:
                    raise TransportError(f"non-retryable response: {last}")
            if attempt + 1 < self.config.max_attempts:
                delay = self._delay(attempt)
                log.info("attempt %d failed (%s); retrying in %.2fs", attempt + 1, last, delay)
                self._sleep(delay)
        raise TransportError(f"gave up after {self.config.max_attempts} attempts: {last}")


Predicate = Union[str, Callable[[str], bool]]


def _matches(pred: Predicate, text: str) -> bool:
    return pred in text if isinstance(pred, str) else bool(pred(text))


@dataclass
class MockEndpoint:
    """Canned replies keyed on the user text; first matching rule wins.

    A string predicate matches by substring. Unmatched prompts get
    ``default_reply``. In-flight requests are counted so tests can check
    concurrency caps.
    """

    rulebook: Sequence[tuple[Predicate, str]] = ()
    default_reply: str = "Answer: No"
    latency: float = 0.0
    calls: int = 0
    max_in_flight: int = 0
    _in_flight: int = field(default=0, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def complete(self, bundle: PromptBundle) -> str:
        with self._lock:
            self.calls += 1
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
        try:
            if self.latency:
                time.sleep(self.latency)
            for pred, reply in self.rulebook:
                if _matches(pred, bundle.user_text):
                    return reply
            return self.default_reply
        finally:
            with self._lock:
                self._in_flight -= 1


def mock_endpoint(rulebook: Union[dict, Sequence[tuple[Predicate, str]], None] = None, **kw) -> MockEndpoint:
    rules = list(rulebook.items()) if isinstance(rulebook, dict) else list(rulebook or ())
    return MockEndpoint(rules, **kw)


def predict_with_endpoint(endpoint: Union[EndpointConfig, Endpoint], bundle: PromptBundle) -> ParsedPrediction:
    """One chat completion, parsed. ParseError keeps the raw reply for audit."""
    if isinstance(endpoint, EndpointConfig):
        client = HttpChatEndpoint(endpoint)
        try:
            return parse_response(client.complete(bundle))
        finally:
            client.close()
    return parse_response(endpoint.complete(bundle))


@dataclass
class LLMPrediction:
    label: int
    parsed: Optional[ParsedPrediction]
    raw: str


class LLMPredictor:
    """Label-producing predictor over prompt bundles, usable with ``evaluate_runs``.

    Requests run concurrently, at most ``max_concurrency`` at a time.
    Unparseable replies count as a negative answer and are logged.
    """

    def __init__(self, endpoint: Endpoint, max_concurrency: int = 4):
        if max_concurrency < 1:
            raise ConfigError("max concurrency must be at least 1", "llm.endpoint.max_concurrency")
        self.endpoint = endpoint
        self.max_concurrency = max_concurrency
        self.history: list[LLMPrediction] = []

    def _one(self, bundle: PromptBundle) -> LLMPrediction:
        raw = self.endpoint.complete(bundle)
        try:
            parsed = parse_response(raw)
        except ParseError:
            log.warning("unparseable reply counted as negative: %r", raw[:200])
            return LLMPrediction(0, None, raw)
        return LLMPrediction(parsed.label, parsed, raw)

    def predict_all(self, bundles: Sequence[PromptBundle]) -> list[LLMPrediction]:
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            out = list(pool.map(self._one, bundles))
        self.history.extend(out)
        return out

    def __call__(self, bundles: Sequence[PromptBundle]) -> np.ndarray:
        return np.array([p.label for p in self.predict_all(bundles)], dtype=np.int64)
