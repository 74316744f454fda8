"""Chat-completion backends: an OpenAI-compatible HTTP client and offline mocks."""
from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from .prompts import Prompt, Role, estimate_tokens

log = logging.getLogger(__name__)

API_KEY_ENV = "LLM_API_KEY"


class BackendError(Exception):
    pass


class AuthError(BackendError):
    pass


class RateLimited(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class ServerError(BackendError):
    pass


class BackendSpecError(ValueError):
    """Unknown backend selector or unusable mock script."""


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_output_tokens: int = 256
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0


class Backend(Protocol):
    def complete(self, prompt: Prompt) -> CompletionResult: ...


def estimate_cost(
    results: Iterable[CompletionResult],
    price_per_1k_prompt: float,
    price_per_1k_completion: float,
) -> float:
    if price_per_1k_prompt < 0 or price_per_1k_completion < 0:
        raise ValueError("prices must be >= 0")
    return sum(
        r.prompt_tokens / 1000 * price_per_1k_prompt + r.completion_tokens / 1000 * price_per_1k_completion
        for r in results
    )


# -- mocks -----------------------------------------------------------------


@dataclass(frozen=True)
class MockScript:
    """``mode`` is one of "scripted", "nearest_echo", "template"."""

    mode: str
    responses: tuple[str, ...] = ()
    text: str = ""

    def __post_init__(self):
        if self.mode not in ("scripted", "nearest_echo", "template"):
            raise ValueError(f"unknown mock mode {self.mode!r}")
        if self.mode == "scripted" and not self.responses:
            raise ValueError("scripted mock needs at least one response")
        if self.mode == "template" and not self.text:
            raise ValueError("template mock needs a non-empty text")

    @classmethod
    def scripted(cls, responses: Sequence[str]) -> "MockScript":
        return cls("scripted", tuple(responses))

    @classmethod
    def nearest_echo(cls) -> "MockScript":
        return cls("nearest_echo")

    @classmethod
    def template(cls, text: str) -> "MockScript":
        return cls("template", text=text)

    @classmethod
    def from_file(cls, path) -> "MockScript":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(obj, list):
            return cls.scripted(obj)
        return cls(obj.get("mode", "scripted"), tuple(obj.get("responses", ())), obj.get("text", ""))


class MockBackend:
    """Deterministic offline backend.

    A scripted mock past the end of its list keeps returning the last entry.
    ``nearest_echo`` returns the first Assistant message of the prompt, which
    is the impression of the closest retrieved exemplar.
    """

    def __init__(self, script: MockScript):
        self.script = script
        self.calls = 0
        self.prompts: list[Prompt] = []
        self._lock = threading.Lock()

    def complete(self, prompt: Prompt) -> CompletionResult:
        with self._lock:
            i = self.calls
            self.calls += 1
            self.prompts.append(prompt)
        if self.script.mode == "scripted":
            text = self.script.responses[min(i, len(self.script.responses) - 1)]
        elif self.script.mode == "template":
            text = self.script.text
        else:
            text = next((m.content for m in prompt.messages if m.role is Role.ASSISTANT), "")
            if not text:
                raise MalformedResponse("nearest_echo mock needs a prompt with at least one exemplar")
        return CompletionResult(text, estimate_tokens(prompt), math.ceil(len(text) / 4), 0.0)


# -- HTTP ------------------------------------------------------------------


class HTTPBackend:
    """OpenAI-compatible ``/chat/completions`` client.

    Retries 429, 5xx and timeouts with exponential backoff; 401/403 fail
    immediately. At most ``max_in_flight`` requests run at once per instance.
    """

    def __init__(
        self,
        cfg: BackendConfig | None = None,
        api_key: str | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg or BackendConfig()
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._client = httpx.Client(timeout=self.cfg.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(self.cfg.max_in_flight)
        self._sleep = sleep
        self.attempts = 0

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _payload(self, prompt: Prompt) -> dict:
        return {
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
            "messages": prompt.to_wire(),
        }

    def complete(self, prompt: Prompt) -> CompletionResult:
        if not self.api_key:
            raise AuthError(f"no API key: set {API_KEY_ENV}")
        url = self.cfg.endpoint.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"}
        payload = self._payload(prompt)
        last: BackendError | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                delay = self.cfg.backoff_base * 2 ** (attempt - 1)
                log.warning("retrying chat completion in %.2fs (%s)", delay, last)
                self._sleep(delay)
            self.attempts += 1
            t0 = time.monotonic()
            try:
                with self._slots:
                    resp = self._client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last = BackendTimeout(f"request timed out: {exc}")
                continue
            except httpx.TransportError as exc:
                last = ServerError(f"transport error: {exc}")
                continue
            latency = time.monotonic() - t0
            if resp.status_code in (401, 403):
                raise AuthError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            if resp.status_code == 429:
                last = RateLimited("HTTP 429: rate limited")
                continue
            if resp.status_code >= 500:
                last = ServerError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return self._parse(resp, prompt, latency)
        raise last

    @staticmethod
    def _parse(resp: httpx.Response, prompt: Prompt, latency: float) -> CompletionResult:
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {exc!r}") from None
        if not isinstance(text, str):
            raise MalformedResponse("message content is not a string")
        usage = body.get("usage") or {}
        pt = usage.get("prompt_tokens")
        ct = usage.get("completion_tokens")
        return CompletionResult(
            text=text.strip(),
            prompt_tokens=int(pt) if pt is not None else estimate_tokens(prompt),
            completion_tokens=int(ct) if ct is not None else math.ceil(len(text) / 4),
            latency=latency,
        )


def make_backend(spec: str, cfg: BackendConfig | None = None) -> Backend:
    """Build a backend from a CLI spec: ``http``, ``mock:nearest_echo`` or ``mock:FILE``."""
    if spec == "http":
        return HTTPBackend(cfg)
    if spec.startswith("mock:"):
        arg = spec[len("mock:") :]
        if arg in ("nearest_echo", "nearest-echo"):
            return MockBackend(MockScript.nearest_echo())
        try:
            return MockBackend(MockScript.from_file(arg))
        except (OSError, ValueError) as exc:
            raise BackendSpecError(f"bad mock script {arg!r}: {exc}") from None
    raise BackendSpecError(f"unknown backend {spec!r}; expected 'http' or 'mock:...'")
