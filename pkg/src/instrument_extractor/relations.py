"""Schema-guided attribute extraction for each canonical instrument.

Instrument names act as anchors: each one gets its own request whose user
text embeds the anchor, its surface forms, and the chunks mentioning it
(all chunks when none do, so detection misses degrade instead of dropping
the anchor). Responses fill the domain record: type, respondents,
constructs, outcomes, and per-field evidence quotes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .chain import PromptTemplate, TraceEntry, load_template, resolve_template_dir
from .chunker import TextChunk
from .errors import SchemaViolation
from .gateway import Gateway, PromptRequest, UsageStats, fingerprint
from .normalizer import CanonicalInstrument, normalize_key

log = logging.getLogger(__name__)

SURVEY_QUESTIONNAIRE = "survey_questionnaire"
INTERVIEW_PROTOCOL = "interview_protocol"
OBSERVATION_PROTOCOL = "observation_protocol"
TEST_ASSESSMENT = "test_assessment"
OTHER_TOOL = "other_tool"

INSTRUMENT_TYPES = (
    SURVEY_QUESTIONNAIRE,
    INTERVIEW_PROTOCOL,
    OBSERVATION_PROTOCOL,
    TEST_ASSESSMENT,
    OTHER_TOOL,
)

STEP_RELATION = "relation"

RECORD_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "type": {"type": "string"},
        "respondents": {"type": "array", "items": {"type": "string"}},
        "constructs": {"type": "array", "items": {"type": "string"}},
        "outcomes": {"type": "array", "items": {"type": "string"}},
        "evidence": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "string"}},
        },
    },
    "required": ["name", "type", "respondents", "constructs", "outcomes"],
}

# Whole-phrase labels checked first, then single keywords in precedence
# order; "interview protocol" must not fall into the protocol-free buckets.
_PHRASE_TYPES = {
    "survey questionnaire": SURVEY_QUESTIONNAIRE,
    "surveys questionnaires": SURVEY_QUESTIONNAIRE,
    "interview protocol": INTERVIEW_PROTOCOL,
    "interview protocols": INTERVIEW_PROTOCOL,
    "observation protocol": OBSERVATION_PROTOCOL,
    "observation protocols": OBSERVATION_PROTOCOL,
    "test assessment": TEST_ASSESSMENT,
    "tests assessments": TEST_ASSESSMENT,
    "other tool": OTHER_TOOL,
    "other tools": OTHER_TOOL,
}

_KEYWORD_TYPES = (
    (("interview", "interviews", "focus",), INTERVIEW_PROTOCOL),
    (("observation", "observations", "observational",), OBSERVATION_PROTOCOL),
    (("survey", "surveys", "questionnaire", "questionnaires", "scale", "inventory",), SURVEY_QUESTIONNAIRE),
    (("test", "tests", "assessment", "assessments", "exam", "exams", "quiz", "battery", "subtest",), TEST_ASSESSMENT),
    (("checklist", "diary", "log", "logs", "rubric", "artifact", "tool", "tools",), OTHER_TOOL),
)


def type_alias_map(raw: str) -> str | None:
    """Map a free-form type label onto the five-way enum; None = no match."""
    label = raw.strip().lower()
    if label in INSTRUMENT_TYPES:
        return label
    # Underscores and slashes separate words here ("Survey/Questionnaire").
    key = normalize_key(raw.replace("_", " ").replace("/", " "))
    if not key:
        return None
    if key in _PHRASE_TYPES:
        return _PHRASE_TYPES[key]
    words = set(key.split())
    for keywords, value in _KEYWORD_TYPES:
        if words & set(keywords):
            return value
    return None


@dataclass(frozen=True)
class InstrumentRecord:
    """One instrument's filled schema for one document."""

    doc_id: str
    canonical_name: str
    instrument_type: str
    respondents: tuple[str, ...] = ()
    constructs: tuple[str, ...] = ()
    outcomes: tuple[str, ...] = ()
    evidence: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    degraded: bool = False

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.canonical_name,
            "type": self.instrument_type,
            "respondents": list(self.respondents),
            "constructs": list(self.constructs),
            "outcomes": list(self.outcomes),
            "evidence": {k: list(v) for k, v in self.evidence.items()},
        }
        if self.degraded:
            out["degraded"] = True
        return out


def document_output(doc_id: str, records: Sequence[InstrumentRecord]) -> dict[str, Any]:
    """The per-document deliverable payload."""
    return {"doc_id": doc_id, "instruments": [r.to_json_dict() for r in records]}


def parse_record_output(raw: object, pointer_base: str = "") -> tuple[str, list[dict[str, Any]]]:
    """Light validation for reading record files back (evaluation path)."""
    from .errors import MalformedInput

    if not isinstance(raw, dict) or not isinstance(raw.get("doc_id"), str) or not raw.get("doc_id"):
        raise MalformedInput("record file must be an object with a non-empty doc_id", pointer_base)
    instruments = raw.get("instruments")
    if not isinstance(instruments, list):
        raise MalformedInput("instruments must be a list", pointer_base + "/instruments")
    for i, item in enumerate(instruments):
        if not isinstance(item, dict) or not isinstance(item.get("name"), str) or not item["name"]:
            raise MalformedInput(
                "each instrument needs a non-empty string name",
                f"{pointer_base}/instruments/{i}",
            )
    return raw["doc_id"], instruments


def _dedup(values: Sequence[Any]) -> tuple[str, ...]:
    seen: set[str] = set()
    out: list[str] = []
    for value in values:
        text = str(value).strip()
        if text and text.lower() not in seen:
            seen.add(text.lower())
            out.append(text)
    return tuple(out)


def _parse_evidence(raw: Any) -> dict[str, tuple[str, ...]]:
    if not isinstance(raw, dict):
        return {}
    out: dict[str, tuple[str, ...]] = {}
    for key, values in raw.items():
        if isinstance(values, list):
            quotes = _dedup([v for v in values if isinstance(v, str)])
            if quotes:
                out[str(key)] = quotes
    return out


def select_chunks(anchor: CanonicalInstrument, chunks: Sequence[TextChunk]) -> list[TextChunk]:
    """Chunks containing any surface form (normalized substring); else all."""
    keys = [normalize_key(s) for s in anchor.surface_names]
    keys.append(normalize_key(anchor.canonical_name))
    keys = [k for k in keys if k]
    selected = [
        chunk for chunk in chunks
        if any(k in normalize_key(chunk.text) for k in keys)
    ]
    return selected if selected else list(chunks)


def _chunks_text(chunks: Sequence[TextChunk]) -> str:
    return "\n\n".join(f"[chunk {c.chunk_index}]\n{c.text}" for c in chunks)


def extract_relations(
    anchors: Sequence[CanonicalInstrument],
    chunks: Sequence[TextChunk],
    gateway: Gateway,
    doc_id: str,
    template: PromptTemplate | None = None,
    template_set: str = "default",
) -> tuple[list[InstrumentRecord], list[TraceEntry], UsageStats]:
    """One request per anchor; every anchor yields exactly one record.

    Unknown type labels coerce to other_tool (logged). A schema failure for
    an anchor degrades to an empty record with the flag set instead of
    failing the document.
    """
    if template is None:
        template = load_template(resolve_template_dir(template_set), STEP_RELATION)
    records: list[InstrumentRecord] = []
    entries: list[TraceEntry] = []
    usage = UsageStats()
    for index, anchor in enumerate(anchors):
        picked = select_chunks(anchor, chunks)
        req = PromptRequest(
            request_id=f"{doc_id}:{STEP_RELATION}:{index}",
            system_text=template.system_text,
            user_text=template.render(
                {
                    "anchor_name": anchor.canonical_name,
                    "surface_names": "; ".join(anchor.surface_names) or anchor.canonical_name,
                    "chunks_text": _chunks_text(picked),
                    "schema": json.dumps(RECORD_SCHEMA, indent=2, sort_keys=True),
                }
            ),
            response_schema=RECORD_SCHEMA,
        )
        try:
            result = gateway.complete(req)
        except SchemaViolation as exc:
            log.warning("relation extraction failed for %s anchor %r: %s",
                        doc_id, anchor.canonical_name, exc)
            records.append(
                InstrumentRecord(
                    doc_id=doc_id,
                    canonical_name=anchor.canonical_name,
                    instrument_type=OTHER_TOOL,
                    degraded=True,
                )
            )
            entries.append(
                TraceEntry(
                    STEP_RELATION, req.request_id, fingerprint(req), None,
                    attempts=gateway.max_repairs + 1,
                    detail={"anchor": anchor.canonical_name, "error": "schema_violation"},
                )
            )
            continue
        usage.add(result.usage)
        parsed = result.parsed
        raw_type = str(parsed.get("type", ""))
        mapped = type_alias_map(raw_type)
        if mapped is None:
            log.warning("anchor %r in %s: type %r outside the enum, coerced to %s",
                        anchor.canonical_name, doc_id, raw_type, OTHER_TOOL)
            mapped = OTHER_TOOL
        records.append(
            InstrumentRecord(
                doc_id=doc_id,
                canonical_name=anchor.canonical_name,
                instrument_type=mapped,
                respondents=_dedup(parsed.get("respondents", [])),
                constructs=_dedup(parsed.get("constructs", [])),
                outcomes=_dedup(parsed.get("outcomes", [])),
                evidence=_parse_evidence(parsed.get("evidence")),
            )
        )
        entries.append(
            TraceEntry(
                STEP_RELATION, req.request_id, fingerprint(req), None,
                attempts=result.attempts,
                detail={"anchor": anchor.canonical_name, "type": mapped,
                        "chunks": [c.chunk_index for c in picked]},
            )
        )
    return records, entries, usage
