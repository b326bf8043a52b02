"""Chat-completion access with retries, schema repair, and usage accounting.

Three backends share one interface: a live HTTP backend (OpenAI-style
``/chat/completions``), a recording wrapper that captures responses while
delegating to another backend, and a mock backend that replays a recorded
transcript keyed by request fingerprint. Fingerprints cover the semantic
request content (system text, user text, response schema, temperature) and
deliberately exclude the request id, so replay is stable across runs.

The gateway layered on top enforces a token-bucket rate limit, retries
transient transport failures with exponential backoff and jitter, and runs a
bounded repair loop when a response fails JSON schema validation: the
validation error is appended to the user text and the request re-sent. Mock
replay keys repair attempts by the original fingerprint with a per-fingerprint
attempt counter, so repair sequences recorded live replay identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import jsonschema
import requests

from .chunker import count_tokens
from .errors import (
    BackendUnavailable,
    IoFailure,
    MalformedInput,
    RateLimited,
    SchemaViolation,
    TranscriptMiss,
)


@dataclass(frozen=True)
class PromptRequest:
    """One chat call, optionally constrained to a JSON response schema."""

    request_id: str
    system_text: str
    user_text: str
    response_schema: Mapping[str, Any] | None = None
    temperature: float = 0.0
    max_output_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_output_tokens is not None and self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


def fingerprint(req: PromptRequest) -> str:
    """Stable digest of (system_text, user_text, response_schema, temperature).

    Excludes request_id and output-token caps, so the same prompt issued under
    a different id (or re-issued during repair) maps to one transcript entry.
    """
    canonical = json.dumps(
        {
            "schema": req.response_schema,
            "system": req.system_text,
            "temperature": float(req.temperature),
            "user": req.user_text,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class UsageStats:
    """Token and latency totals; aggregation is component-wise addition."""

    input_tokens: int = 0
    output_tokens: int = 0
    wall_time_ms: int = 0
    backend_name: str = ""
    requests: int = 0
    retries: int = 0
    repairs: int = 0

    def add(self, other: "UsageStats") -> None:
        self.input_tokens += other.input_tokens
        self.output_tokens += other.output_tokens
        self.wall_time_ms += other.wall_time_ms
        self.requests += other.requests
        self.retries += other.retries
        self.repairs += other.repairs
        if other.backend_name:
            if not self.backend_name:
                self.backend_name = other.backend_name
            elif self.backend_name != other.backend_name:
                self.backend_name = "mixed"

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "total_tokens": self.total_tokens,
            "wall_time_ms": self.wall_time_ms,
            "backend_name": self.backend_name,
            "requests": self.requests,
            "retries": self.retries,
            "repairs": self.repairs,
        }


@dataclass(frozen=True)
class CompletionResult:
    """Final outcome of one request after any repair re-prompts."""

    request_id: str
    text: str
    parsed: Any
    usage: UsageStats
    attempts: int


class Backend(Protocol):  # pragma: no cover - structural type only
    name: str

    def send(self, req: PromptRequest, user_text: str, request_fingerprint: str) -> tuple[str, UsageStats]:
        ...


class MockBackend:
    """Replays transcripts: fingerprint -> attempt-indexed response list.

    Repeated sends of one fingerprint walk the response list; once exhausted
    the last response repeats, which lets a transcript force a permanent
    schema failure. Replay reports zero wall time so outputs stay
    byte-identical across runs.
    """

    name = "mock"

    def __init__(self, responses: Mapping[str, list[str]]):
        self._responses = {k: list(v) for k, v in responses.items()}
        self._attempts: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_path(cls, path: str | Path) -> "MockBackend":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise IoFailure(f"cannot read transcript {path}: {exc}") from exc
        responses: dict[str, list[str]] = {}
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInput(f"transcript {path} line {lineno}: invalid JSON: {exc}") from exc
            if (
                not isinstance(record, dict)
                or not isinstance(record.get("fingerprint"), str)
                or not isinstance(record.get("responses"), list)
                or not record["responses"]
                or any(not isinstance(r, str) for r in record["responses"])
            ):
                raise MalformedInput(
                    f"transcript {path} line {lineno}: expected "
                    '{"fingerprint": str, "responses": [str, ...]}'
                )
            responses[record["fingerprint"]] = list(record["responses"])
        return cls(responses)

    def send(self, req: PromptRequest, user_text: str, request_fingerprint: str) -> tuple[str, UsageStats]:
        entry = self._responses.get(request_fingerprint)
        if entry is None:
            raise TranscriptMiss(req.request_id, request_fingerprint)
        with self._lock:
            attempt = self._attempts.get(request_fingerprint, 0)
            self._attempts[request_fingerprint] = attempt + 1
        text = entry[min(attempt, len(entry) - 1)]
        usage = UsageStats(
            input_tokens=count_tokens(req.system_text) + count_tokens(user_text),
            output_tokens=count_tokens(text),
            wall_time_ms=0,
            backend_name=self.name,
            requests=1,
        )
        return text, usage


class LiveBackend:
    """OpenAI-style chat completions over HTTP."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        post_fn: Callable[..., requests.Response] | None = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.name = model
        self._api_key = api_key
        self._timeout = timeout
        self._post = post_fn or requests.post
        self._clock = clock

    def send(self, req: PromptRequest, user_text: str, request_fingerprint: str) -> tuple[str, UsageStats]:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": req.temperature,
        }
        if req.max_output_tokens is not None:
            payload["max_tokens"] = req.max_output_tokens
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        started = self._clock()
        try:
            response = self._post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.model}: {exc}") from exc
        elapsed_ms = _elapsed_ms(started, self._clock())
        if response.status_code == 429:
            raise RateLimited(f"{self.model}: rate limited (HTTP 429)")
        if response.status_code != 200:
            raise BackendUnavailable(f"{self.model}: HTTP {response.status_code}")
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise BackendUnavailable(f"{self.model}: unparseable completion payload: {exc}") from exc
        if not isinstance(text, str):
            raise BackendUnavailable(f"{self.model}: completion content is not text")
        reported = data.get("usage") or {}
        usage = UsageStats(
            input_tokens=int(reported.get("prompt_tokens", count_tokens(req.system_text) + count_tokens(user_text))),
            output_tokens=int(reported.get("completion_tokens", count_tokens(text))),
            wall_time_ms=elapsed_ms,
            backend_name=self.name,
            requests=1,
        )
        return text, usage


def _elapsed_ms(start: float, end: float) -> int:
    # Any positive duration reports at least 1 ms.
    delta = max(0.0, end - start) * 1000.0
    return int(math.ceil(delta)) if delta > 0 else 0


class RecordingBackend:
    """Delegates to another backend and captures a replayable transcript."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.name = inner.name
        self._records: dict[str, list[str]] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()

    def send(self, req: PromptRequest, user_text: str, request_fingerprint: str) -> tuple[str, UsageStats]:
        text, usage = self.inner.send(req, user_text, request_fingerprint)
        with self._lock:
            if request_fingerprint not in self._records:
                self._records[request_fingerprint] = []
                self._order.append(request_fingerprint)
            self._records[request_fingerprint].append(text)
        return text, usage

    def transcript(self) -> dict[str, list[str]]:
        return {fp: list(self._records[fp]) for fp in self._order}

    def write_transcript(self, path: str | Path) -> None:
        path = Path(path)
        lines = [
            json.dumps({"fingerprint": fp, "responses": self._records[fp]}, ensure_ascii=False)
            for fp in self._order
        ]
        try:
            path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write transcript {path}: {exc}") from exc


class RateLimiter:
    """Token bucket: ``rate_per_sec`` refill, bursts up to ``capacity``."""

    def __init__(
        self,
        rate_per_sec: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep_fn: Callable[[float], None] = time.sleep,
    ):
        if rate_per_sec <= 0:
            raise ValueError("rate_per_sec must be positive")
        self.rate = rate_per_sec
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_sec)
        self._clock = clock
        self._sleep = sleep_fn
        self._tokens = self.capacity
        self._last = clock()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self._clock()
        self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
        self._last = now

    def acquire(self) -> float:
        """Take one token, sleeping as needed; returns seconds waited."""
        waited = 0.0
        while True:
            with self._lock:
                self._refill()
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return waited
                shortfall = (1.0 - self._tokens) / self.rate
            self._sleep(shortfall)
            waited += shortfall


def extract_json(text: str) -> Any:
    """Parse a JSON payload that may be wrapped in code fences or prose."""
    candidate = text.strip()
    if candidate.startswith("```"):
        first_break = candidate.find("\n")
        if first_break != -1:
            candidate = candidate[first_break + 1 :]
        if candidate.rstrip().endswith("```"):
            candidate = candidate.rstrip()[:-3]
        candidate = candidate.strip()
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        pass
    start = candidate.find("{")
    end = candidate.rfind("}")
    if start != -1 and end > start:
        return json.loads(candidate[start : end + 1])
    return json.loads(candidate)  # re-raise with original position info


_REPAIR_TEMPLATE = (
    "{user}\n\n"
    "Your previous reply was rejected: {error}\n"
    "Return only a JSON object that satisfies the required schema. No prose."
)


@dataclass
class Gateway:
    """Policy layer: rate limit, transport retries, schema repair loop."""

    backend: Backend
    rate_limiter: RateLimiter | None = None
    transport_retries: int = 3
    max_repairs: int = 2
    backoff_initial: float = 0.5
    backoff_multiplier: float = 2.0
    jitter: float = 0.1
    sleep_fn: Callable[[float], None] = time.sleep
    clock: Callable[[], float] = time.monotonic
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    usage_total: UsageStats = field(default_factory=UsageStats)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def _account(self, usage: UsageStats) -> None:
        with self._lock:
            self.usage_total.add(usage)

    def _send_with_transport_retries(
        self, req: PromptRequest, user_text: str, request_fingerprint: str
    ) -> tuple[str, UsageStats]:
        delay = self.backoff_initial
        last_error: Exception | None = None
        for attempt in range(self.transport_retries + 1):
            if attempt > 0:
                with self._lock:
                    pause = delay * (1.0 + self.jitter * self.rng.random())
                    self.usage_total.retries += 1
                self.sleep_fn(pause)
                delay *= self.backoff_multiplier
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            started = self.clock()
            try:
                return self.backend.send(req, user_text, request_fingerprint)
            except (RateLimited, BackendUnavailable) as exc:
                # Failed attempts still consume wall time; account for them.
                self._account(
                    UsageStats(
                        wall_time_ms=_elapsed_ms(started, self.clock()),
                        backend_name=self.backend.name,
                        requests=1,
                    )
                )
                last_error = exc
        raise BackendUnavailable(
            f"request {req.request_id}: gave up after "
            f"{self.transport_retries + 1} attempts: {last_error}"
        ) from last_error

    def complete(self, req: PromptRequest) -> CompletionResult:
        """Send, validate against the response schema, repair if needed.

        All attempts (including rejected ones) count toward usage totals.
        Raises SchemaViolation once the repair budget is exhausted.
        """
        request_fingerprint = fingerprint(req)
        user_text = req.user_text
        usage = UsageStats()
        attempts = 0
        while True:
            text, attempt_usage = self._send_with_transport_retries(req, user_text, request_fingerprint)
            attempts += 1
            usage.add(attempt_usage)
            self._account(attempt_usage)
            if req.response_schema is None:
                return CompletionResult(req.request_id, text, None, usage, attempts)
            error: str | None = None
            parsed: Any = None
            try:
                parsed = extract_json(text)
            except json.JSONDecodeError as exc:
                error = f"response is not valid JSON ({exc.msg} at char {exc.pos})"
            else:
                try:
                    jsonschema.validate(parsed, dict(req.response_schema))
                except jsonschema.ValidationError as exc:
                    pointer = "/".join(str(p) for p in exc.absolute_path)
                    error = f"schema violation at /{pointer}: {exc.message}"
            if error is None:
                usage.repairs = attempts - 1
                return CompletionResult(req.request_id, text, parsed, usage, attempts)
            if attempts > self.max_repairs:
                raise SchemaViolation(
                    f"request {req.request_id}: {error} after {attempts - 1} repair attempts",
                    raw_text=text,
                )
            with self._lock:
                self.usage_total.repairs += 1
            user_text = _REPAIR_TEMPLATE.format(user=req.user_text, error=error)
