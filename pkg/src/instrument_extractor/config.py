"""Run configuration: one JSON file, flag overrides, and backend assembly.

A run is fully described by the config file plus overrides; the manifest
written next to the outputs embeds the resolved configuration (minus the
output directory) and its digest, which is what makes replayed runs
checkable for identity.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .chain import ChainConfig
from .chunker import ChunkerConfig
from .errors import ConfigError
from .gateway import (
    Backend,
    Gateway,
    LiveBackend,
    MockBackend,
    RateLimiter,
    RecordingBackend,
)

MODE_MOCK = "mock"
MODE_LIVE = "live"
MODE_RECORD = "record"
BACKEND_MODES = (MODE_MOCK, MODE_LIVE, MODE_RECORD)


@dataclass(frozen=True)
class BackendSettings:
    """Exactly one mode: mock replays, live calls out, record does both."""

    mode: str
    transcript: str | None = None  # replay source (mock) or capture target (record)
    base_url: str | None = None
    model: str | None = None
    api_key_env: str | None = None
    timeout: float = 60.0
    requests_per_minute: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in BACKEND_MODES:
            raise ConfigError(f"backend.mode must be one of {list(BACKEND_MODES)}, got {self.mode!r}")
        if self.mode == MODE_MOCK and not self.transcript:
            raise ConfigError("backend.mode 'mock' requires backend.transcript")
        if self.mode in (MODE_LIVE, MODE_RECORD):
            if not self.base_url or not self.model:
                raise ConfigError(f"backend.mode {self.mode!r} requires backend.base_url and backend.model")
        if self.mode == MODE_RECORD and not self.transcript:
            raise ConfigError("backend.mode 'record' requires backend.transcript (capture target)")


@dataclass(frozen=True)
class RunConfig:
    input_dir: str
    dictionary_path: str
    output_dir: str
    chain: ChainConfig
    chunker: ChunkerConfig
    backend: BackendSettings
    collapse_subtests: bool = False
    fuzzy_threshold: float = 0.90
    concurrency: int = 1
    seed: int = 0
    transport_retries: int = 3
    max_repairs: int = 2
    backoff_initial: float = 0.5
    backoff_multiplier: float = 2.0
    jitter: float = 0.1
    fail_fast: bool = False

    def __post_init__(self) -> None:
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if not 0.0 < self.fuzzy_threshold <= 1.0:
            raise ConfigError("fuzzy_threshold must lie in (0, 1]")


def _expect(mapping: Mapping[str, Any], key: str, kind: type, where: str) -> Any:
    value = mapping.get(key)
    if not isinstance(value, kind) or (kind is str and not value):
        raise ConfigError(f"config key {where}{key!r} must be a non-empty {kind.__name__}")
    return value


def _section(raw: Mapping[str, Any], key: str) -> dict[str, Any]:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config key {key!r} must be an object")
    return dict(value)


def load_run_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read the config file, apply flag overrides (flags win), validate."""
    raw: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in config file {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")

    overrides = dict(overrides or {})
    chain_raw = _section(raw, "chain")
    chunker_raw = _section(raw, "chunker")
    backend_raw = _section(raw, "backend")
    gateway_raw = _section(raw, "gateway")

    for key in ("input_dir", "dictionary", "output_dir", "collapse_subtests",
                "fuzzy_threshold", "concurrency", "seed", "fail_fast"):
        if overrides.get(key) is not None:
            raw[key] = overrides[key]
    for key in ("steps", "input_mode", "template_set"):
        if overrides.get(key) is not None:
            chain_raw[key] = overrides[key]
    for key in ("chunk_budget", "overlap"):
        if overrides.get(key) is not None:
            chunker_raw[key] = overrides[key]
    if overrides.get("transcript") is not None:
        backend_raw = {"mode": MODE_MOCK, "transcript": overrides["transcript"]}
    if overrides.get("transcript_out") is not None:
        backend_raw["mode"] = MODE_RECORD
        backend_raw["transcript"] = overrides["transcript_out"]

    input_dir = _expect(raw, "input_dir", str, "")
    dictionary_path = _expect(raw, "dictionary", str, "")
    output_dir = _expect(raw, "output_dir", str, "")

    steps = chain_raw.get("steps", ["extraction", "summarization", "decision"])
    if isinstance(steps, str):
        steps = [s.strip() for s in steps.split(",") if s.strip()]
    if not isinstance(steps, list) or any(not isinstance(s, str) for s in steps):
        raise ConfigError("chain.steps must be a list of step names")
    chain = ChainConfig(
        steps=tuple(steps),
        input_mode=chain_raw.get("input_mode", "method_excerpt"),
        prompt_template_set=chain_raw.get("template_set", "default"),
    )

    try:
        chunker = ChunkerConfig(
            chunk_budget=int(chunker_raw.get("chunk_budget", 1000)),
            overlap=int(chunker_raw.get("overlap", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid chunker settings: {exc}") from exc

    if not backend_raw:
        raise ConfigError("config requires a backend section ({'mode': 'mock'|'live'|'record', ...})")
    backend = BackendSettings(
        mode=str(backend_raw.get("mode", "")),
        transcript=backend_raw.get("transcript"),
        base_url=backend_raw.get("base_url"),
        model=backend_raw.get("model"),
        api_key_env=backend_raw.get("api_key_env"),
        timeout=float(backend_raw.get("timeout", 60.0)),
        requests_per_minute=(
            float(backend_raw["requests_per_minute"])
            if backend_raw.get("requests_per_minute") is not None
            else None
        ),
    )

    try:
        return RunConfig(
            input_dir=input_dir,
            dictionary_path=dictionary_path,
            output_dir=output_dir,
            chain=chain,
            chunker=chunker,
            backend=backend,
            collapse_subtests=bool(raw.get("collapse_subtests", False)),
            fuzzy_threshold=float(raw.get("fuzzy_threshold", 0.90)),
            concurrency=int(raw.get("concurrency", 1)),
            seed=int(raw.get("seed", 0)),
            transport_retries=int(gateway_raw.get("transport_retries", 3)),
            max_repairs=int(gateway_raw.get("max_repairs", 2)),
            backoff_initial=float(gateway_raw.get("backoff_initial", 0.5)),
            backoff_multiplier=float(gateway_raw.get("backoff_multiplier", 2.0)),
            jitter=float(gateway_raw.get("jitter", 0.1)),
            fail_fast=bool(raw.get("fail_fast", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc


def resolved_config_dict(cfg: RunConfig) -> dict[str, Any]:
    """The semantic configuration, output location excluded.

    Two runs with equal resolved dicts replay identically, wherever their
    outputs land; that is what the manifest digest certifies.
    """
    return {
        "input_dir": cfg.input_dir,
        "dictionary": cfg.dictionary_path,
        "chain": {
            "steps": list(cfg.chain.steps),
            "input_mode": cfg.chain.input_mode,
            "template_set": cfg.chain.prompt_template_set,
        },
        "chunker": {"chunk_budget": cfg.chunker.chunk_budget, "overlap": cfg.chunker.overlap},
        "backend": {
            "mode": cfg.backend.mode,
            "transcript": cfg.backend.transcript,
            "base_url": cfg.backend.base_url,
            "model": cfg.backend.model,
            "api_key_env": cfg.backend.api_key_env,
            "timeout": cfg.backend.timeout,
            "requests_per_minute": cfg.backend.requests_per_minute,
        },
        "collapse_subtests": cfg.collapse_subtests,
        "fuzzy_threshold": cfg.fuzzy_threshold,
        "concurrency": cfg.concurrency,
        "seed": cfg.seed,
        "gateway": {
            "transport_retries": cfg.transport_retries,
            "max_repairs": cfg.max_repairs,
            "backoff_initial": cfg.backoff_initial,
            "backoff_multiplier": cfg.backoff_multiplier,
            "jitter": cfg.jitter,
        },
        "fail_fast": cfg.fail_fast,
    }


def config_digest(resolved: Mapping[str, Any]) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_gateway(cfg: RunConfig) -> tuple[Gateway, RecordingBackend | None]:
    """Assemble the configured backend stack; recorder returned when capturing."""
    backend: Backend
    recorder: RecordingBackend | None = None
    settings = cfg.backend
    if settings.mode == MODE_MOCK:
        assert settings.transcript is not None
        backend = MockBackend.from_path(settings.transcript)
    else:
        api_key = os.environ.get(settings.api_key_env) if settings.api_key_env else None
        assert settings.base_url is not None and settings.model is not None
        backend = LiveBackend(
            base_url=settings.base_url,
            model=settings.model,
            api_key=api_key,
            timeout=settings.timeout,
        )
        if settings.mode == MODE_RECORD:
            recorder = RecordingBackend(backend)
            backend = recorder
    rate_limiter = None
    if settings.requests_per_minute:
        rate_limiter = RateLimiter(settings.requests_per_minute / 60.0)
    gateway = Gateway(
        backend=backend,
        rate_limiter=rate_limiter,
        transport_retries=cfg.transport_retries,
        max_repairs=cfg.max_repairs,
        backoff_initial=cfg.backoff_initial,
        backoff_multiplier=cfg.backoff_multiplier,
        jitter=cfg.jitter,
        rng=random.Random(cfg.seed),
    )
    return gateway, recorder
