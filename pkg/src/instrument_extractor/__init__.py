"""Instrument-information extraction pipeline for parsed research papers."""

from .chain import ChainConfig, ChainTrace, InstrumentMention, run_chain
from .chunker import ChunkerConfig, TextChunk, chunk_text, count_tokens
from .doc_model import Block, Page, ParsedDocument, flatten_text, load_document
from .errors import (
    BackendUnavailable,
    ConfigError,
    IoFailure,
    MalformedInput,
    MismatchedCorpora,
    PipelineError,
    RateLimited,
    SchemaViolation,
    SpanOutOfRange,
    TranscriptMiss,
)
from .evaluator import (
    EvalReport,
    MatchResult,
    compare_configs,
    compute_metrics,
    evaluate_corpus,
    match_entities,
)
from .gateway import (
    CompletionResult,
    Gateway,
    LiveBackend,
    MockBackend,
    PromptRequest,
    RecordingBackend,
    UsageStats,
    fingerprint,
)
from .normalizer import (
    CanonicalInstrument,
    DictEntry,
    InstrumentDictionary,
    load_dictionary,
    normalize,
    normalize_key,
)
from .relations import InstrumentRecord, extract_relations, type_alias_map
from .section_detector import SectionSpan, detect_method_span

__version__ = "0.1.0"

__all__ = [
    "BackendUnavailable",
    "Block",
    "CanonicalInstrument",
    "ChainConfig",
    "ChainTrace",
    "ChunkerConfig",
    "CompletionResult",
    "ConfigError",
    "DictEntry",
    "EvalReport",
    "Gateway",
    "InstrumentDictionary",
    "InstrumentMention",
    "InstrumentRecord",
    "IoFailure",
    "LiveBackend",
    "MalformedInput",
    "MatchResult",
    "MismatchedCorpora",
    "MockBackend",
    "Page",
    "ParsedDocument",
    "PipelineError",
    "PromptRequest",
    "RateLimited",
    "RecordingBackend",
    "SchemaViolation",
    "SectionSpan",
    "SpanOutOfRange",
    "TextChunk",
    "TranscriptMiss",
    "UsageStats",
    "chunk_text",
    "compare_configs",
    "compute_metrics",
    "count_tokens",
    "detect_method_span",
    "evaluate_corpus",
    "extract_relations",
    "fingerprint",
    "flatten_text",
    "load_dictionary",
    "load_document",
    "match_entities",
    "normalize",
    "normalize_key",
    "run_chain",
    "type_alias_map",
]
