"""Multi-step instrument-name extraction over chunked document text.

The chain runs up to three steps. Extraction asks for instrument mentions per
chunk under a JSON schema. Summarization asks, per chunk, how the study
collects and measures its data; the text is kept verbatim. Decision sees all
mentions plus all summaries in one request and returns the instruments the
study actually used, filtering mentioned-but-unused tools. Any subset of steps
can run (the ablation axis), with one constraint: decision needs at least one
upstream step to consume.

Prompt wording lives in template files, not code: each template file holds a
system text, a line containing only ``===``, and a user-text body with
``{{placeholder}}`` slots. A template set is a directory of such files,
resolved against the filesystem first and the packaged sets second.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .chunker import ChunkerConfig, TextChunk, chunk_text
from .doc_model import ParsedDocument, flatten_text
from .errors import ConfigError, SchemaViolation
from .gateway import Gateway, PromptRequest, UsageStats, fingerprint
from .normalizer import normalize_key
from .section_detector import detect_method_span

log = logging.getLogger(__name__)

STEP_EXTRACTION = "extraction"
STEP_SUMMARIZATION = "summarization"
STEP_DECISION = "decision"
STEP_ORDER = (STEP_EXTRACTION, STEP_SUMMARIZATION, STEP_DECISION)

MODE_METHOD_EXCERPT = "method_excerpt"
MODE_FULL_TEXT = "full_text"
INPUT_MODES = (MODE_METHOD_EXCERPT, MODE_FULL_TEXT)

# Response contract for the extraction and decision steps.
MENTION_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "instruments": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "evidence": {"type": "string"},
                    "note": {"type": "string"},
                },
                "required": ["name"],
            },
        }
    },
    "required": ["instruments"],
}


@dataclass(frozen=True)
class ChainConfig:
    """Which steps run, over which input span, with which templates."""

    steps: tuple[str, ...] = STEP_ORDER
    input_mode: str = MODE_METHOD_EXCERPT
    prompt_template_set: str = "default"

    def __post_init__(self) -> None:
        requested = tuple(self.steps)
        unknown = [s for s in requested if s not in STEP_ORDER]
        if unknown:
            raise ConfigError(f"unknown chain steps: {unknown}; valid steps are {list(STEP_ORDER)}")
        ordered = tuple(s for s in STEP_ORDER if s in requested)
        if not ordered:
            raise ConfigError("chain steps must be a non-empty subset of "
                              f"{list(STEP_ORDER)}")
        if STEP_DECISION in ordered and not (
            STEP_EXTRACTION in ordered or STEP_SUMMARIZATION in ordered
        ):
            raise ConfigError(
                "the decision step requires extraction or summarization to run before it"
            )
        object.__setattr__(self, "steps", ordered)
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(
                f"unknown input_mode {self.input_mode!r}; valid modes are {list(INPUT_MODES)}"
            )


@dataclass(frozen=True)
class InstrumentMention:
    """One surface-form sighting of an instrument name."""

    surface_name: str
    chunk_index: int
    evidence: str = ""
    confidence_note: str | None = None


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str
    user_template: str

    def render(self, values: Mapping[str, str]) -> str:
        out = self.user_template
        for key, value in values.items():
            out = out.replace("{{" + key + "}}", value)
        return out


def resolve_template_dir(identifier: str):
    """Filesystem directory if it exists, else a packaged template set."""
    candidate = Path(identifier)
    if candidate.is_dir():
        return candidate
    packaged = resources.files(__package__).joinpath("templates", identifier)
    if packaged.is_dir():
        return packaged
    raise ConfigError(
        f"template set {identifier!r} is neither a directory nor a packaged set"
    )


def load_template(template_dir, name: str) -> PromptTemplate:
    entry = template_dir / f"{name}.txt"
    try:
        text = entry.read_text(encoding="utf-8")
    except (OSError, FileNotFoundError) as exc:
        raise ConfigError(f"template {name!r} missing from {template_dir}: {exc}") from exc
    lines = text.split("\n")
    for i, line in enumerate(lines):
        if line.strip() == "===":
            system_text = "\n".join(lines[:i]).strip()
            user_template = "\n".join(lines[i + 1 :]).strip()
            if not user_template:
                raise ConfigError(f"template {name!r} in {template_dir} has an empty user section")
            return PromptTemplate(system_text, user_template)
    raise ConfigError(
        f"template {name!r} in {template_dir} lacks the '===' system/user separator line"
    )


def load_template_set(
    identifier: str, names: Sequence[str] = (STEP_EXTRACTION, STEP_SUMMARIZATION, STEP_DECISION)
) -> dict[str, PromptTemplate]:
    template_dir = resolve_template_dir(identifier)
    return {name: load_template(template_dir, name) for name in names}


@dataclass(frozen=True)
class TraceEntry:
    """One request's summary: enough to audit, not the full payloads."""

    step: str
    request_id: str
    fingerprint: str
    chunk_index: int | None
    attempts: int
    detail: dict[str, Any]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "request_id": self.request_id,
            "fingerprint": self.fingerprint,
            "chunk_index": self.chunk_index,
            "attempts": self.attempts,
            "detail": self.detail,
        }


@dataclass
class ChainTrace:
    doc_id: str
    steps: tuple[str, ...]
    input_mode: str
    detection: dict[str, Any] = field(default_factory=dict)
    chunk_count: int = 0
    # The chunks themselves ride along for downstream stages; they are not
    # serialized (chunk_count is).
    chunks: tuple[TextChunk, ...] = ()
    entries: list[TraceEntry] = field(default_factory=list)
    mentions_by_chunk: dict[int, list[InstrumentMention]] = field(default_factory=dict)
    final_mentions: list[InstrumentMention] = field(default_factory=list)
    degraded: bool = False

    def to_json_lines(self) -> list[str]:
        head = {
            "doc_id": self.doc_id,
            "steps": list(self.steps),
            "input_mode": self.input_mode,
            "detection": self.detection,
            "chunk_count": self.chunk_count,
        }
        lines = [json.dumps(head, ensure_ascii=False)]
        lines.extend(json.dumps(e.to_json_dict(), ensure_ascii=False) for e in self.entries)
        tail = {
            "final_mentions": [
                {"name": m.surface_name, "chunk_index": m.chunk_index, "evidence": m.evidence}
                for m in self.final_mentions
            ],
            "degraded": self.degraded,
        }
        lines.append(json.dumps(tail, ensure_ascii=False))
        return lines


def _schema_text(schema: Mapping[str, Any]) -> str:
    return json.dumps(schema, indent=2, sort_keys=True)


def _parse_mentions(parsed: Any, chunk_index: int) -> list[InstrumentMention]:
    mentions = []
    for item in parsed.get("instruments", []):
        name = str(item.get("name", "")).strip()
        if not name:
            continue
        mentions.append(
            InstrumentMention(
                surface_name=name,
                chunk_index=chunk_index,
                evidence=str(item.get("evidence", "")),
                confidence_note=item.get("note"),
            )
        )
    return mentions


def dedup_mentions(mentions: Sequence[InstrumentMention]) -> list[InstrumentMention]:
    """Case-insensitive surface-form dedup, first occurrence wins."""
    seen: set[str] = set()
    out: list[InstrumentMention] = []
    for m in mentions:
        key = m.surface_name.lower()
        if key not in seen:
            seen.add(key)
            out.append(m)
    return out


def run_extraction_step(
    chunks: Sequence[TextChunk],
    gateway: Gateway,
    template: PromptTemplate,
    doc_id: str,
) -> tuple[dict[int, list[InstrumentMention]], list[TraceEntry], UsageStats]:
    """One schema-constrained request per chunk; schema failures absorb to []."""
    mentions_by_chunk: dict[int, list[InstrumentMention]] = {}
    entries: list[TraceEntry] = []
    usage = UsageStats()
    for chunk in chunks:
        req = PromptRequest(
            request_id=f"{doc_id}:{STEP_EXTRACTION}:{chunk.chunk_index}",
            system_text=template.system_text,
            user_text=template.render(
                {"chunk_text": chunk.text, "schema": _schema_text(MENTION_SCHEMA)}
            ),
            response_schema=MENTION_SCHEMA,
        )
        try:
            result = gateway.complete(req)
        except SchemaViolation as exc:
            log.warning("extraction failed for %s chunk %d: %s", doc_id, chunk.chunk_index, exc)
            mentions_by_chunk[chunk.chunk_index] = []
            entries.append(
                TraceEntry(
                    STEP_EXTRACTION, req.request_id, fingerprint(req), chunk.chunk_index,
                    attempts=gateway.max_repairs + 1,
                    detail={"error": "schema_violation", "mentions": []},
                )
            )
            continue
        usage.add(result.usage)
        found = _parse_mentions(result.parsed, chunk.chunk_index)
        mentions_by_chunk[chunk.chunk_index] = found
        entries.append(
            TraceEntry(
                STEP_EXTRACTION, req.request_id, fingerprint(req), chunk.chunk_index,
                attempts=result.attempts,
                detail={"mentions": [m.surface_name for m in found]},
            )
        )
    return mentions_by_chunk, entries, usage


def run_summarization_step(
    chunks: Sequence[TextChunk],
    gateway: Gateway,
    template: PromptTemplate,
    doc_id: str,
) -> tuple[dict[int, str], list[TraceEntry], UsageStats]:
    """One free-text request per chunk; outputs kept verbatim."""
    summaries: dict[int, str] = {}
    entries: list[TraceEntry] = []
    usage = UsageStats()
    for chunk in chunks:
        req = PromptRequest(
            request_id=f"{doc_id}:{STEP_SUMMARIZATION}:{chunk.chunk_index}",
            system_text=template.system_text,
            user_text=template.render({"chunk_text": chunk.text}),
            response_schema=None,
        )
        result = gateway.complete(req)
        usage.add(result.usage)
        summaries[chunk.chunk_index] = result.text
        entries.append(
            TraceEntry(
                STEP_SUMMARIZATION, req.request_id, fingerprint(req), chunk.chunk_index,
                attempts=result.attempts,
                detail={"summary_chars": len(result.text)},
            )
        )
    return summaries, entries, usage


def _mentions_json(mentions_by_chunk: Mapping[int, Sequence[InstrumentMention]]) -> str:
    rows = [
        {"chunk_index": idx, "name": m.surface_name, "evidence": m.evidence}
        for idx in sorted(mentions_by_chunk)
        for m in mentions_by_chunk[idx]
    ]
    return json.dumps(rows, ensure_ascii=False, indent=2)


def _summaries_text(summaries: Mapping[int, str]) -> str:
    if not summaries:
        return "(no summaries available)"
    return "\n".join(f"[chunk {idx}] {summaries[idx]}" for idx in sorted(summaries))


def _locate_chunk(name: str, chunks: Sequence[TextChunk]) -> int:
    """Best-effort home chunk for a decision-step name: key containment."""
    key = normalize_key(name)
    if key:
        for chunk in chunks:
            if key in normalize_key(chunk.text):
                return chunk.chunk_index
    return chunks[0].chunk_index if chunks else 0


def run_decision_step(
    mentions_by_chunk: Mapping[int, Sequence[InstrumentMention]],
    summaries: Mapping[int, str],
    chunks: Sequence[TextChunk],
    gateway: Gateway,
    template: PromptTemplate,
    doc_id: str,
) -> tuple[list[InstrumentMention], list[TraceEntry], UsageStats, bool]:
    """Single consolidation request over everything the prior steps produced.

    Schema failure after repairs does not lose the document: the output falls
    back to the deduplicated union of extraction mentions and the trace is
    flagged degraded.
    """
    all_mentions = [m for idx in sorted(mentions_by_chunk) for m in mentions_by_chunk[idx]]
    req = PromptRequest(
        request_id=f"{doc_id}:{STEP_DECISION}",
        system_text=template.system_text,
        user_text=template.render(
            {
                "mentions_json": _mentions_json(mentions_by_chunk),
                "summaries": _summaries_text(summaries),
                "schema": _schema_text(MENTION_SCHEMA),
            }
        ),
        response_schema=MENTION_SCHEMA,
    )
    usage = UsageStats()
    try:
        result = gateway.complete(req)
    except SchemaViolation as exc:
        log.warning("decision step failed for %s, falling back to mention union: %s", doc_id, exc)
        fallback = dedup_mentions(all_mentions)
        entry = TraceEntry(
            STEP_DECISION, req.request_id, fingerprint(req), None,
            attempts=gateway.max_repairs + 1,
            detail={"error": "schema_violation", "fallback_union": True,
                    "instruments": [m.surface_name for m in fallback]},
        )
        return fallback, [entry], usage, True
    usage.add(result.usage)
    by_lower = {}
    for m in all_mentions:
        by_lower.setdefault(m.surface_name.lower(), m)
    final: list[InstrumentMention] = []
    seen: set[str] = set()
    for item in result.parsed.get("instruments", []):
        name = str(item.get("name", "")).strip()
        if not name or name.lower() in seen:
            continue
        seen.add(name.lower())
        source = by_lower.get(name.lower())
        evidence = str(item.get("evidence", "")) or (source.evidence if source else "")
        chunk_index = source.chunk_index if source else _locate_chunk(name, chunks)
        final.append(
            InstrumentMention(
                surface_name=name,
                chunk_index=chunk_index,
                evidence=evidence,
                confidence_note=item.get("note"),
            )
        )
    entry = TraceEntry(
        STEP_DECISION, req.request_id, fingerprint(req), None,
        attempts=result.attempts,
        detail={"instruments": [m.surface_name for m in final]},
    )
    return final, [entry], usage, False


def run_chain(
    doc: ParsedDocument,
    cfg: ChainConfig,
    chunk_cfg: ChunkerConfig,
    gateway: Gateway,
    templates: Mapping[str, PromptTemplate] | None = None,
) -> tuple[list[InstrumentMention], ChainTrace, UsageStats]:
    """Detect span, chunk, and run the enabled steps in pipeline order."""
    if templates is None:
        templates = load_template_set(cfg.prompt_template_set)
    trace = ChainTrace(doc_id=doc.doc_id, steps=cfg.steps, input_mode=cfg.input_mode)
    usage = UsageStats()

    if cfg.input_mode == MODE_METHOD_EXCERPT:
        span = detect_method_span(doc)
        trace.detection = {
            "mode": span.detection_mode,
            "start_page": span.start_page,
            "end_page": span.end_page,
            "matched_heading": span.matched_heading,
        }
        flat = flatten_text(doc, (span.start_page, span.end_page))
    else:
        trace.detection = {"mode": MODE_FULL_TEXT}
        flat = flatten_text(doc)

    chunks = chunk_text(flat.text, provenance=flat.spans, cfg=chunk_cfg)
    trace.chunk_count = len(chunks)
    trace.chunks = tuple(chunks)
    if not chunks:
        return [], trace, usage

    mentions_by_chunk: dict[int, list[InstrumentMention]] = {}
    summaries: dict[int, str] = {}
    if STEP_EXTRACTION in cfg.steps:
        mentions_by_chunk, entries, step_usage = run_extraction_step(
            chunks, gateway, templates[STEP_EXTRACTION], doc.doc_id
        )
        trace.entries.extend(entries)
        usage.add(step_usage)
        trace.mentions_by_chunk = {k: list(v) for k, v in mentions_by_chunk.items()}
    if STEP_SUMMARIZATION in cfg.steps:
        summaries, entries, step_usage = run_summarization_step(
            chunks, gateway, templates[STEP_SUMMARIZATION], doc.doc_id
        )
        trace.entries.extend(entries)
        usage.add(step_usage)
    if STEP_DECISION in cfg.steps:
        final, entries, step_usage, degraded = run_decision_step(
            mentions_by_chunk, summaries, chunks, gateway, templates[STEP_DECISION], doc.doc_id
        )
        trace.entries.extend(entries)
        usage.add(step_usage)
        trace.degraded = degraded
    else:
        final = dedup_mentions(
            [m for idx in sorted(mentions_by_chunk) for m in mentions_by_chunk[idx]]
        )
    trace.final_mentions = list(final)
    return final, trace, usage
