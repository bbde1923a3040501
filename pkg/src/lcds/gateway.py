"""Single abstraction over completion providers.

Every pipeline stage talks to a Gateway; nothing downstream ever sees
provider-specific fields, so swapping the backend model is a config change.
Two providers ship: an HTTP chat-completion client (the de facto interface
of all candidate backends) and a deterministic mock that makes the whole
pipeline and test suite runnable with no network. Recording/replay wrappers
turn real provider traffic into offline fixtures.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    MalformedStructuredOutput,
    ProviderError,
    ProviderTimeout,
    RetriesExhausted,
    TransientProviderError,
)

log = logging.getLogger(__name__)

STRUCTURED_SHAPES = ("identifier-list", "label-segment-map", "judge-breakdown")

# Lines of the form "[<sid>] text" inside a prompt's source block.
_SOURCE_LINE = re.compile(r"^\[([^\[\]\s]+#[^\[\]]+#\d+)\]\s?(.*)$", re.MULTILINE)


@dataclass
class CompletionRequest:
    prompt: str
    max_tokens: int = 1024
    temperature: float = 0.0  # pipeline calls are always deterministic
    structured: str | None = None
    request_id: str = ""

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.structured is not None and self.structured not in STRUCTURED_SHAPES:
            raise ValueError(f"unknown structured shape {self.structured!r}")


@dataclass
class CompletionResponse:
    text: str
    provider_id: str
    latency_ms: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass
class ProviderConfig:
    endpoint: str = ""
    model: str = ""
    auth_env: str = "LCDS_API_KEY"  # name of the env var holding the token
    timeout_ms: int = 30_000
    max_retries: int = 2
    max_in_flight: int = 4
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls) -> "ProviderConfig":
        return cls(
            endpoint=os.environ.get("LCDS_ENDPOINT", ""),
            model=os.environ.get("LCDS_MODEL", ""),
        )


class MockProvider:
    """Deterministic provider for tests and offline runs.

    Plain completions echo the prompt's source block verbatim, so generated
    text is always grounded in the sources it was given. Structured shapes
    get fixed canned answers.
    """

    provider_id = "mock"
    is_mock = True

    def send(self, req: CompletionRequest) -> str:
        if req.structured == "judge-breakdown":
            return json.dumps(
                {
                    "score": 100,
                    "breakdown": {
                        "Information Accuracy": 40,
                        "Medical Completeness": 35,
                        "Professional Standardization": 15,
                        "Clinical Practicality": 10,
                    },
                }
            )
        if req.structured == "identifier-list":
            return "[]"
        if req.structured == "label-segment-map":
            return "{}"
        texts = [m.group(2).strip() for m in _SOURCE_LINE.finditer(req.prompt)]
        return " ".join(t for t in texts if t)


class HttpProvider:
    """Chat-completion HTTP client with a single user message per request."""

    is_mock = False

    def __init__(self, config: ProviderConfig):
        if not config.endpoint:
            raise ValueError("HttpProvider needs an endpoint")
        self.config = config
        self.provider_id = config.model or config.endpoint

    def send(self, req: CompletionRequest) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=self.config.timeout_ms / 1000.0)
        except requests.Timeout as exc:
            raise ProviderTimeout(f"provider timed out after {self.config.timeout_ms} ms") from exc
        except requests.RequestException as exc:
            raise TransientProviderError(f"transport failure: {exc}") from exc
        if resp.status_code >= 500:
            raise TransientProviderError(f"provider returned {resp.status_code}", status=resp.status_code)
        if resp.status_code != 200:
            raise ProviderError(f"provider returned {resp.status_code}: {resp.text[:200]}", status=resp.status_code)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"unexpected provider payload: {exc}") from exc


def _request_key(req: CompletionRequest) -> str:
    tag = f"{req.structured or ''}::{req.prompt}"
    return hashlib.sha256(tag.encode("utf-8")).hexdigest()


class RecordingProvider:
    """Wrap a provider and append every exchange to a JSONL fixture file."""

    def __init__(self, inner, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.provider_id = f"recording({inner.provider_id})"
        self.is_mock = getattr(inner, "is_mock", False)

    def send(self, req: CompletionRequest) -> str:
        text = self.inner.send(req)
        entry = {"key": _request_key(req), "structured": req.structured, "prompt": req.prompt, "text": text}
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
        return text


class ReplayProvider:
    """Serve recorded responses by request hash; misses are provider errors.

    is_mock should match the recorded provider so the pipeline takes the
    same deterministic-fallback branches it took while recording.
    """

    def __init__(self, path: str | Path, is_mock: bool = False):
        self.provider_id = "replay"
        self.is_mock = is_mock
        self._responses: dict[str, str] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                entry = json.loads(line)
                self._responses[entry["key"]] = entry["text"]

    def send(self, req: CompletionRequest) -> str:
        key = _request_key(req)
        if key not in self._responses:
            raise ProviderError(f"no recorded response for request {key[:12]}")
        return self._responses[key]


class Gateway:
    """Retry, concurrency bounding, and structured-output parsing around a provider."""

    def __init__(self, provider, config: ProviderConfig | None = None):
        self.provider = provider
        self.config = config or ProviderConfig()
        self._slots = threading.BoundedSemaphore(self.config.max_in_flight)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight_seen = 0
        self.dropped_ids = 0  # hallucinated identifiers discarded by callers

    @property
    def is_mock(self) -> bool:
        return getattr(self.provider, "is_mock", False)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        """Run one completion, retrying transient transport failures with backoff."""
        with self._slots:
            with self._lock:
                self._in_flight += 1
                self.max_in_flight_seen = max(self.max_in_flight_seen, self._in_flight)
            try:
                return self._complete_locked(req)
            finally:
                with self._lock:
                    self._in_flight -= 1

    def _complete_locked(self, req: CompletionRequest) -> CompletionResponse:
        attempts = self.config.max_retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            started = time.monotonic()
            try:
                text = self.provider.send(req)
            except (TransientProviderError, ProviderTimeout) as exc:
                last = exc
                if attempt + 1 < attempts and self.config.backoff_s > 0:
                    time.sleep(self.config.backoff_s * (2**attempt))
                continue
            latency = (time.monotonic() - started) * 1000.0
            return CompletionResponse(
                text=text,
                provider_id=self.provider.provider_id,
                latency_ms=latency,
                prompt_tokens=len(req.prompt),
                completion_tokens=len(text),
            )
        raise RetriesExhausted(f"gave up after {attempts} attempts: {last}")

    def complete_structured(self, req: CompletionRequest):
        """Complete and parse into the request's structured shape.

        One repair retry is attempted with an explicit format reminder before
        giving up with MalformedStructuredOutput.
        """
        if req.structured is None:
            raise ValueError("complete_structured needs a structured shape tag")
        resp = self.complete(req)
        try:
            return parse_structured(resp.text, req.structured)
        except MalformedStructuredOutput:
            repair = CompletionRequest(
                prompt=req.prompt + "\n\n" + _repair_hint(req.structured),
                max_tokens=req.max_tokens,
                temperature=req.temperature,
                structured=req.structured,
                request_id=req.request_id,
            )
            resp = self.complete(repair)
            return parse_structured(resp.text, req.structured)


def _repair_hint(shape: str) -> str:
    hints = {
        "identifier-list": "仅输出标识符列表，格式如 [id1, id2]，不要其他文字。",
        "label-segment-map": "仅输出一个 JSON 对象：{\"标签\": \"原文片段\"}，不要其他文字。",
        "judge-breakdown": '仅输出 JSON：{"score": 总分, "breakdown": {各维度分}}，不要其他文字。',
    }
    return hints[shape]


def _extract_json(text: str):
    """Pull the first JSON value out of possibly chatty provider text."""
    text = text.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z]*\n?|```$", "", text).strip()
    for opener, closer in (("{", "}"), ("[", "]")):
        start = text.find(opener)
        if start < 0:
            continue
        depth = 0
        in_str = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_str = False
                continue
            if ch == '"':
                in_str = True
            elif ch == opener:
                depth += 1
            elif ch == closer:
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(text[start : i + 1])
                    except json.JSONDecodeError:
                        break
        break
    raise MalformedStructuredOutput(f"no JSON value found in {text[:80]!r}")


def _parse_identifier_list(text: str) -> list[str]:
    stripped = text.strip()
    try:
        value = _extract_json(stripped)
        if isinstance(value, list):
            return [str(v).strip() for v in value if str(v).strip()]
    except MalformedStructuredOutput:
        pass
    if stripped.startswith("[") and stripped.endswith("]"):
        inner = stripped[1:-1].strip()
        if not inner:
            return []
        return [part.strip().strip("'\"") for part in inner.split(",") if part.strip().strip("'\"")]
    raise MalformedStructuredOutput(f"not an identifier list: {text[:80]!r}")


_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def _coerce_score(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _NUMBER.search(value)  # tolerates "38/40"-style answers
        if m:
            return float(m.group(0))
    raise MalformedStructuredOutput(f"not a score: {value!r}")


def _parse_judge_breakdown(text: str) -> dict:
    value = _extract_json(text)
    if not isinstance(value, dict) or "breakdown" not in value or "score" not in value:
        raise MalformedStructuredOutput("judge output lacks score/breakdown keys")
    breakdown = value["breakdown"]
    if not isinstance(breakdown, dict) or not breakdown:
        raise MalformedStructuredOutput("judge breakdown is not a mapping")
    return {
        "score": _coerce_score(value["score"]),
        "breakdown": {str(k): _coerce_score(v) for k, v in breakdown.items()},
    }


def _parse_label_segment_map(text: str) -> dict[str, str]:
    value = _extract_json(text)
    if not isinstance(value, dict):
        raise MalformedStructuredOutput("expected a JSON object of label -> segment")
    return {str(k): str(v) for k, v in value.items()}


def parse_structured(text: str, shape: str):
    if shape == "identifier-list":
        return _parse_identifier_list(text)
    if shape == "label-segment-map":
        return _parse_label_segment_map(text)
    if shape == "judge-breakdown":
        return _parse_judge_breakdown(text)
    raise ValueError(f"unknown structured shape {shape!r}")


def mock_gateway(config: ProviderConfig | None = None) -> Gateway:
    cfg = config or ProviderConfig(backoff_s=0.0)
    return Gateway(MockProvider(), cfg)
