"""Chat-completion client: prompt rendering, HTTP transport with retry,
record/replay caching, and deterministic offline mocks.

Every call is stateless. A request carries the complete prompt; no
conversation state survives between calls, so results are independent of
call order and safe to issue from concurrent workers.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import requests

from .codebook import Dimension
from .errors import CacheMissError, ConfigError, TransportError

API_KEY_ENV = "CHUNKCODE_API_KEY"
BASE_URL_ENV = "CHUNKCODE_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"

CACHE_MODES = ("live", "record", "replay", "mock")

PROMPT_TEMPLATE = (
    "Explain whether the parameter '{parameter}' is mentioned/directly talked "
    "about in the following text and provide evidence from the text. If it "
    "does, briefly explain how (3-5 sentences with ~2 pieces of evidence); if "
    "it does not match, briefly explain why the paper does not focus on it "
    "(1 sentence). Note that '{parameter}' is defined as '{definition}'."
)


def render_prompt(dim: Dimension, body: str) -> str:
    """Render the coding instruction for one dimension, then the text to code.

    The dimension's display name fills both template slots; the instruction
    comes first and the body follows after a blank line.
    """
    if not body:
        raise ValueError("prompt body must be nonempty")
    instruction = PROMPT_TEMPLATE.replace("{parameter}", dim.name).replace(
        "{definition}", dim.definition
    )
    return f"{instruction}\n\n{body}"


@dataclass(frozen=True)
class PromptRequest:
    """One self-contained completion request.

    ``tag`` distinguishes repeats of an identical prompt (for example the
    same document and dimension across iterations) so each repeat gets its
    own cache entry; leave it empty for plain one-off requests.
    """

    model: str
    prompt_text: str
    tag: str = ""

    @property
    def request_key(self) -> str:
        """Stable hex cache key derived from model, tag, and prompt text."""
        payload = "\x1f".join((self.model, self.tag, self.prompt_text))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LLMResponse:
    """Verbatim assistant text plus transport metadata."""

    text: str
    provider_meta: Mapping[str, object] = field(default_factory=dict)
    from_cache: bool = False


def retry_delay(
    attempt: int,
    *,
    base: float = 1.0,
    cap: float = 30.0,
    max_attempts: int = 5,
    rng: random.Random | None = None,
) -> float | None:
    """Backoff delay after a failed attempt (1-based), or None to give up.

    Doubles from ``base`` per attempt, capped at ``cap``, with multiplicative
    jitter in [0.5, 1.5). Once ``attempt`` reaches ``max_attempts`` the caller
    should stop retrying.
    """
    if attempt < 1:
        raise ValueError("attempt numbering is 1-based")
    if attempt >= max_attempts:
        return None
    delay = min(cap, base * (2 ** (attempt - 1)))
    jitter = (rng.uniform(0.5, 1.5) if rng is not None else random.uniform(0.5, 1.5))
    return delay * jitter


class ScriptedMock:
    """Deterministic responder: a fixed mapping of request keys to text.

    ``default`` answers any request not in the script; without it, unknown
    requests raise so silent test gaps cannot slip through.
    """

    def __init__(self, script: Mapping[str, str] | None = None, default: str | None = None):
        self.script = dict(script or {})
        self.default = default

    def __call__(self, request: PromptRequest) -> str:
        try:
            return self.script[request.request_key]
        except KeyError:
            if self.default is not None:
                return self.default
            raise ConfigError(
                f"scripted mock has no response for request_key {request.request_key}"
            ) from None


class StochasticMock:
    """Seeded responder with a per-cell truth, flipped with probability p.

    The flip decision is a pure function of (seed, request_key), so responses
    are reproducible and independent of call order. ``truth`` may be a bool
    or a callable of the request (for example keyed off ``request.tag``).
    """

    def __init__(
        self,
        *,
        seed: int,
        flip_probability: float,
        truth: bool | Callable[[PromptRequest], bool] = True,
        positive_text: str = "Yes, the parameter is mentioned in the text.",
        negative_text: str = "The paper does not focus on this parameter.",
    ):
        if not 0.0 <= flip_probability <= 1.0:
            raise ValueError("flip probability must lie in [0, 1]")
        self.seed = seed
        self.flip_probability = flip_probability
        self.truth = truth
        self.positive_text = positive_text
        self.negative_text = negative_text

    def __call__(self, request: PromptRequest) -> str:
        base = self.truth(request) if callable(self.truth) else self.truth
        digest = hashlib.sha256(
            f"{self.seed}:{request.request_key}".encode("utf-8")
        ).digest()
        draw = int.from_bytes(digest[:8], "big") / 2**64
        value = base ^ (draw < self.flip_probability)
        return self.positive_text if value else self.negative_text


class LLMClient:
    """Front end for chat completions with four modes.

    live    - always call the endpoint, no cache traffic.
    record  - read-through cache: serve hits, fetch and persist misses.
    replay  - cache only; a miss is an error naming the request key.
    mock    - delegate to an offline responder, no cache or network.

    The cache holds one JSON file per request key (filename = hex key).
    A semaphore bounds in-flight requests; cache writes are serialized and
    atomic, reads need no lock.
    """

    def __init__(
        self,
        *,
        mode: str = "live",
        base_url: str | None = None,
        api_key: str | None = None,
        cache_dir: str | Path | None = None,
        mock: Callable[[PromptRequest], str] | None = None,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        timeout: float = 60.0,
        max_inflight: int = 4,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        if mode not in CACHE_MODES:
            raise ConfigError(f"unknown cache mode {mode!r}; expected one of {CACHE_MODES}")
        if mode in ("record", "replay") and cache_dir is None:
            raise ConfigError(f"cache mode {mode!r} requires a cache directory")
        if mode == "mock" and mock is None:
            raise ConfigError("mock mode requires a responder")
        self.mode = mode
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.mock = mock
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._session = session or requests.Session()
        self._sleep = sleep
        self._rng = rng
        self._inflight = threading.Semaphore(max_inflight)
        self._cache_write_lock = threading.Lock()

    def complete(self, request: PromptRequest) -> LLMResponse:
        """Execute one stateless completion per the configured mode."""
        if self.mode == "mock":
            assert self.mock is not None
            return LLMResponse(
                text=self.mock(request),
                provider_meta={"provider": "mock"},
                from_cache=False,
            )
        if self.mode in ("record", "replay"):
            entry = self._cache_read(request.request_key)
            if entry is not None:
                return LLMResponse(
                    text=entry["response"]["text"],
                    provider_meta=entry["response"].get("provider_meta", {}),
                    from_cache=True,
                )
            if self.mode == "replay":
                raise CacheMissError(
                    f"no cached response for request_key {request.request_key}"
                )
        response = self._post(request)
        if self.mode == "record":
            self._cache_write(request, response)
        return response

    # -- transport ---------------------------------------------------------

    def _post(self, request: PromptRequest) -> LLMResponse:
        url = f"{self.base_url}/chat/completions"
        body = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        attempt = 1
        while True:
            retryable, failure, response = self._try_once(url, body, headers)
            if response is not None:
                return response
            if not retryable:
                raise TransportError(f"chat completion failed: {failure}")
            delay = retry_delay(
                attempt,
                base=self.backoff_base,
                max_attempts=self.max_attempts,
                rng=self._rng,
            )
            if delay is None:
                raise TransportError(
                    f"chat completion failed after {attempt} attempts: {failure}"
                )
            self._sleep(delay)
            attempt += 1

    def _try_once(self, url, body, headers):
        start = time.monotonic()
        with self._inflight:
            try:
                resp = self._session.post(url, json=body, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                return True, f"{type(exc).__name__}: {exc}", None
        latency = time.monotonic() - start
        if resp.status_code != 200:
            retryable = resp.status_code == 429 or resp.status_code >= 500
            return retryable, f"HTTP {resp.status_code}: {resp.text[:200]}", None
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            return False, f"malformed completion payload: {exc}", None
        if not isinstance(text, str):
            return False, "completion content is not a string", None
        meta = {
            "status": resp.status_code,
            "latency_s": latency,
            "model": data.get("model"),
            "usage": data.get("usage"),
        }
        return False, "", LLMResponse(text=text, provider_meta=meta, from_cache=False)

    # -- cache -------------------------------------------------------------

    def _cache_path(self, key: str) -> Path:
        assert self.cache_dir is not None
        return self.cache_dir / key

    def _cache_read(self, key: str) -> dict | None:
        path = self._cache_path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                entry = json.load(fh)
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            # Unreadable entries count as misses; record mode will refetch.
            return None
        if not isinstance(entry, dict) or "response" not in entry:
            return None
        return entry

    def _cache_write(self, request: PromptRequest, response: LLMResponse) -> None:
        entry = {
            "request": {
                "model": request.model,
                "tag": request.tag,
                "prompt_text": request.prompt_text,
            },
            "response": {
                "text": response.text,
                "provider_meta": dict(response.provider_meta),
            },
        }
        path = self._cache_path(request.request_key)
        tmp = path.with_name(f"{path.name}.{os.getpid()}.tmp")
        with self._cache_write_lock:
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False)
            os.replace(tmp, path)
