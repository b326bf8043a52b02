"""Token counting and token-budgeted, sentence-preserving text chunking.

The token rule is deliberately vendor-free so counts are byte-exact and
portable: a token is a maximal run of alphanumeric characters, or a single
non-whitespace non-alphanumeric character. Budgets are config-tunable to
compensate for the coarser count relative to any particular model's
tokenizer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .doc_model import ProvenanceSpan

# Alphanumeric runs (unicode, underscore excluded) first, otherwise one
# non-whitespace character.
_TOKEN = re.compile(r"[^\W_]+|\S", re.UNICODE)

# A sentence ends after ./!/? + whitespace when the next character is an
# uppercase ASCII letter or digit. The whitespace stays with the finished
# sentence so chunk concatenation is lossless.
_SENTENCE_BREAK = re.compile(r"[.!?][ \t\r\f\v\n]+(?=[A-Z0-9])")


def count_tokens(text: str) -> int:
    return sum(1 for _ in _TOKEN.finditer(text))


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Half-open character spans of sentences, covering the text exactly.

    Newlines always end a sentence; runs of blank lines therefore yield
    whitespace-only "sentences", which merge into chunks like any other.
    """
    if not text:
        return []
    breaks = {m.end() for m in _SENTENCE_BREAK.finditer(text)}
    breaks.update(i + 1 for i, ch in enumerate(text) if ch == "\n")
    breaks.discard(0)
    breaks.discard(len(text))
    cuts = sorted(breaks)
    spans = []
    start = 0
    for cut in cuts:
        spans.append((start, cut))
        start = cut
    spans.append((start, len(text)))
    return spans


@dataclass(frozen=True)
class ChunkerConfig:
    chunk_budget: int = 1000
    overlap: int = 0

    def __post_init__(self) -> None:
        if self.chunk_budget < 1:
            raise ValueError("chunk_budget must be a positive token count")
        if self.overlap < 0 or self.overlap >= self.chunk_budget:
            raise ValueError("overlap must satisfy 0 <= overlap < chunk_budget")


@dataclass(frozen=True)
class TextChunk:
    chunk_index: int
    text: str
    token_count: int
    provenance: tuple[tuple[int, int], ...] = ()  # (page_number, block_index)
    oversized: bool = False  # single sentence exceeding the budget, kept whole
    overlap_chars: int = 0  # prefix length repeated from the previous chunk
    start_offset: int = 0  # position of text[overlap_chars:] in the source


def _provenance_for(
    spans: tuple[ProvenanceSpan, ...], start: int, end: int
) -> tuple[tuple[int, int], ...]:
    pairs: list[tuple[int, int]] = []
    for span in spans:
        if span.start < end and span.end > start:
            pair = (span.page_number, span.block_index)
            if not pairs or pairs[-1] != pair:
                pairs.append(pair)
    return tuple(pairs)


@dataclass
class _Builder:
    text: str
    provenance: tuple[ProvenanceSpan, ...]
    overlap_budget: int
    chunks: list[TextChunk] = field(default_factory=list)
    pending: list[tuple[int, int, int]] = field(default_factory=list)  # (start, end, tokens)
    pending_overlap: int = 0  # leading pending sentences carried from last chunk

    def tokens(self) -> int:
        return sum(t for _, _, t in self.pending)

    def emit(self, oversized: bool = False) -> None:
        if not self.pending or self.pending_overlap == len(self.pending):
            # Nothing, or only sentences already emitted in the previous chunk.
            return
        start = self.pending[0][0]
        end = self.pending[-1][1]
        body = self.text[start:end]
        overlap_chars = sum(
            e - s for s, e, _ in self.pending[: self.pending_overlap]
        )
        self.chunks.append(
            TextChunk(
                chunk_index=len(self.chunks),
                text=body,
                token_count=count_tokens(body),
                provenance=_provenance_for(self.provenance, start, end),
                oversized=oversized,
                overlap_chars=overlap_chars,
                start_offset=start + overlap_chars,
            )
        )
        if self.overlap_budget > 0 and not oversized:
            carried: list[tuple[int, int, int]] = []
            total = 0
            for sent in reversed(self.pending):
                if total + sent[2] > self.overlap_budget:
                    break
                carried.insert(0, sent)
                total += sent[2]
            self.pending = carried
            self.pending_overlap = len(carried)
        else:
            self.pending = []
            self.pending_overlap = 0


def chunk_text(
    text: str,
    provenance: tuple[ProvenanceSpan, ...] = (),
    cfg: ChunkerConfig | None = None,
) -> list[TextChunk]:
    """Split text into budget-respecting chunks at sentence boundaries.

    Sentences are never split: a single sentence above the budget becomes its
    own chunk, flagged oversized. With overlap 0 the chunk texts concatenate
    to the input exactly; with overlap > 0 each chunk repeats up to that many
    tokens of trailing sentences from its predecessor (the repeated prefix
    length is recorded in ``overlap_chars``).
    """
    cfg = cfg or ChunkerConfig()
    builder = _Builder(text=text, provenance=provenance, overlap_budget=cfg.overlap)
    for start, end in sentence_spans(text):
        tokens = count_tokens(text[start:end])
        if tokens > cfg.chunk_budget:
            builder.emit()
            builder.pending = [(start, end, tokens)]
            builder.pending_overlap = 0
            builder.emit(oversized=True)
            continue
        if builder.pending and builder.tokens() + tokens > cfg.chunk_budget:
            builder.emit()
            # A carried overlap tail may still not leave room; drop it then.
            if builder.pending and builder.tokens() + tokens > cfg.chunk_budget:
                builder.pending = []
                builder.pending_overlap = 0
        builder.pending.append((start, end, tokens))
    builder.emit()
    return builder.chunks
