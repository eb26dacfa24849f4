from __future__ import annotations

import collections
import datetime as dt
import hashlib
import json
import logging
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Union

import httpx

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    def __init__(self, message, status: Optional[int] = None, retriable: bool = False):
        super().__init__(message)
        self.status = status
        self.retriable = retriable


class ScriptExhausted(BackendError):
    pass


class TranscriptMiss(BackendError):
    def __init__(self, prompt_hash: str):
        super().__init__(f"no recorded reply for prompt {prompt_hash[:12]}")
        self.prompt_hash = prompt_hash


def normalize_prompt(text: str) -> str:
    return " ".join(text.split())


def prompt_sha256(text: str) -> str:
    """Hash used to match prompts in transcripts; insensitive to whitespace differences."""
    return hashlib.sha256(normalize_prompt(text).encode("utf-8")).hexdigest()


def _text_and_stream(prompt):
    if isinstance(prompt, str):
        return prompt, None
    return prompt.text, getattr(prompt, "stream", None)


class _RateLimiter:
    def __init__(self, min_interval: float):
        self.min_interval = min_interval
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self):
        if self.min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self.min_interval
        if delay > 0:
            time.sleep(delay)


class Backend:
    """Base class: parameter defaults, bounded retries, in-flight cap, rate limit."""

    kind = "abstract"

    def __init__(
        self,
        temperature: float = 0.0,
        max_tokens: Optional[int] = None,
        seed: Optional[int] = None,
        max_attempts: int = 3,
        retry_backoff: float = 0.5,
        max_in_flight: int = 4,
        min_interval: float = 0.0,
    ):
        self.params = {"temperature": temperature, "max_tokens": max_tokens, "seed": seed}
        self.max_attempts = max(1, max_attempts)
        self.retry_backoff = retry_backoff
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))
        self._limiter = _RateLimiter(min_interval)

    def complete(self, prompt, **overrides) -> str:
        text, stream = _text_and_stream(prompt)
        params = {**self.params, **{k: v for k, v in overrides.items() if v is not None}}
        attempt = 0
        while True:
            attempt += 1
            try:
                with self._slots:
                    self._limiter.wait()
                    return self._send(text, params, stream)
            except BackendError as exc:
                if not exc.retriable or attempt >= self.max_attempts:
                    raise
                log.warning("%s backend attempt %d failed: %s", self.kind, attempt, exc)
                time.sleep(self.retry_backoff * 2 ** (attempt - 1))

    def _send(self, text: str, params: dict, stream: Optional[str]) -> str:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


class HttpBackend(Backend):
    """OpenAI-compatible ``/chat/completions`` client."""

    kind = "http-openai-compatible"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: Optional[str] = None,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 120.0,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env, "")
        self.timeout = timeout

    def _send(self, text, params, stream):
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": text}],
            "temperature": params["temperature"],
        }
        if params.get("max_tokens") is not None:
            payload["max_tokens"] = params["max_tokens"]
        if params.get("seed") is not None:
            payload["seed"] = params["seed"]
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = httpx.post(
                f"{self.endpoint}/chat/completions", json=payload, headers=headers, timeout=self.timeout
            )
        except httpx.TransportError as exc:
            raise BackendError(f"transport error: {exc}", retriable=True) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendError(f"HTTP {resp.status_code}", resp.status_code, retriable=True)
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}", resp.status_code)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {exc}", resp.status_code) from exc

    def describe(self):
        return {**super().describe(), "endpoint": self.endpoint, "model": self.model}


Script = Union[list, dict, Callable[[str], str]]


class ScriptedBackend(Backend):
    """Replies from a fixed script.

    ``script`` is a list consumed in order, a mapping from stream id (see
    ``PromptBundle.stream``) to such a list, or a callable ``prompt -> reply``.
    """

    kind = "scripted"

    def __init__(self, script: Script, **kwargs):
        kwargs.setdefault("max_attempts", 1)
        super().__init__(**kwargs)
        self._lock = threading.Lock()
        if callable(script):
            self._fn, self._queues = script, None
        elif isinstance(script, dict):
            self._fn = None
            self._queues = {k: collections.deque(v) for k, v in script.items()}
        else:
            self._fn = None
            self._queues = {None: collections.deque(script)}

    def _send(self, text, params, stream):
        if self._fn is not None:
            return self._fn(text)
        with self._lock:
            key = stream if stream in self._queues else None
            queue = self._queues.get(key)
            if not queue:
                raise ScriptExhausted(f"script exhausted for stream {stream!r}")
            return queue.popleft()

    @classmethod
    def from_file(cls, path, **kwargs) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh), **kwargs)


def read_transcript(path) -> list:
    if not Path(path).exists():
        return []
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class ReplayBackend(Backend):
    """Serves replies recorded by :class:`RecordingBackend`; identical prompts replay in order."""

    kind = "replay"

    def __init__(self, transcript_path, **kwargs):
        kwargs.setdefault("max_attempts", 1)
        super().__init__(**kwargs)
        self.transcript_path = str(transcript_path)
        self._lock = threading.Lock()
        self._replies = collections.defaultdict(collections.deque)
        for entry in read_transcript(transcript_path):
            self._replies[entry["prompt_sha256"]].append(entry["reply"])

    def _send(self, text, params, stream):
        h = prompt_sha256(text)
        with self._lock:
            queue = self._replies.get(h)
            if not queue:
                raise TranscriptMiss(h)
            return queue.popleft()


class RecordingBackend(Backend):
    """Wraps another backend and appends every exchange to a JSONL transcript."""

    kind = "record"

    def __init__(self, inner: Backend, transcript_path):
        super().__init__()
        self.inner = inner
        self.params = inner.params
        self.transcript_path = str(transcript_path)
        Path(transcript_path).parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def complete(self, prompt, **overrides) -> str:
        text, _ = _text_and_stream(prompt)
        reply = self.inner.complete(prompt, **overrides)
        params = {**self.inner.params, **{k: v for k, v in overrides.items() if v is not None}}
        entry = {
            "prompt_sha256": prompt_sha256(text),
            "prompt": text,
            "reply": reply,
            "params": params,
            "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(),
        }
        with self._lock, open(self.transcript_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")
        return reply

    def describe(self):
        return {"kind": self.kind, "inner": self.inner.describe()}


def complete(backend: Backend, prompt, **params) -> str:
    return backend.complete(prompt, **params)


def complete_many(backend: Backend, prompts: list, jobs: int = 1, **params) -> list:
    """Complete several prompts concurrently; replies come back in input order."""
    if jobs <= 1:
        return [backend.complete(p, **params) for p in prompts]
    ids = [uuid.uuid4().hex for _ in prompts]
    results = {}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(backend.complete, p, **params): cid for cid, p in zip(ids, prompts)}
        for fut, cid in futures.items():
            results[cid] = fut.result()
    return [results[cid] for cid in ids]
