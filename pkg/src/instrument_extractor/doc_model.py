"""Parsed-document model: loading, validation, and text flattening.

Documents arrive as hierarchical JSON emitted by an upstream PDF parser
(one file per paper, format documented in the README). This module owns
the frozen ingestion schema so the pipeline never couples to any specific
parser's native output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IoFailure, MalformedInput, SpanOutOfRange

BLOCK_KINDS = ("heading", "paragraph", "caption", "table", "list", "other")

# Kinds whose text may legitimately be empty (figures, equations, bare tables).
_EMPTY_TEXT_OK = ("table", "other")


@dataclass(frozen=True)
class Block:
    """One reading-order unit of a page: a heading, paragraph, caption, etc."""

    kind: str
    text: str
    level: int | None = None  # heading depth; present iff kind == "heading"


@dataclass(frozen=True)
class Page:
    page_number: int  # 1-based
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class ParsedDocument:
    doc_id: str
    source_path: str
    pages: tuple[Page, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def page_count(self) -> int:
        return len(self.pages)

    def page_range(self) -> tuple[int, int]:
        """(first, last) page number; (1, 0) for an empty document."""
        if not self.pages:
            return (1, 0)
        return (self.pages[0].page_number, self.pages[-1].page_number)

    def to_json_dict(self) -> dict:
        """Serialize back to the ingestion format (round-trips losslessly)."""
        return {
            "doc_id": self.doc_id,
            "source_path": self.source_path,
            "metadata": dict(self.metadata),
            "pages": [
                {
                    "page_number": page.page_number,
                    "blocks": [
                        _block_to_json(block) for block in page.blocks
                    ],
                }
                for page in self.pages
            ],
        }


def _block_to_json(block: Block) -> dict:
    out: dict = {"kind": block.kind, "text": block.text}
    if block.level is not None:
        out["level"] = block.level
    return out


@dataclass(frozen=True)
class ProvenanceSpan:
    """Maps a half-open character range of flattened text to its source block.

    The range includes the newline separator following the block's text (if
    any), so concatenating all spans' segments reproduces the flattened text
    exactly.
    """

    start: int
    end: int
    page_number: int
    block_index: int  # position within the page's block list


@dataclass(frozen=True)
class FlattenedText:
    text: str
    spans: tuple[ProvenanceSpan, ...]


def _require(condition: bool, message: str, pointer: str) -> None:
    if not condition:
        raise MalformedInput(message, pointer)


def _parse_block(raw: object, pointer: str) -> Block:
    _require(isinstance(raw, dict), "block must be an object", pointer)
    assert isinstance(raw, dict)
    _require("kind" in raw, "missing required key 'kind'", pointer)
    _require("text" in raw, "missing required key 'text'", pointer)
    kind = raw["kind"]
    _require(
        isinstance(kind, str) and kind in BLOCK_KINDS,
        f"block kind must be one of {BLOCK_KINDS}",
        pointer + "/kind",
    )
    text = raw["text"]
    _require(isinstance(text, str), "block text must be a string", pointer + "/text")
    level = raw.get("level")
    if kind == "heading":
        _require(
            isinstance(level, int) and not isinstance(level, bool) and level >= 1,
            "heading block requires a positive integer 'level'",
            pointer + "/level",
        )
    else:
        _require(level is None, "'level' is only valid on heading blocks", pointer + "/level")
    if kind not in _EMPTY_TEXT_OK:
        _require(text != "", f"{kind} block text must be non-empty", pointer + "/text")
    return Block(kind=kind, text=text, level=level)


def _parse_page(raw: object, pointer: str) -> Page:
    _require(isinstance(raw, dict), "page must be an object", pointer)
    assert isinstance(raw, dict)
    _require("page_number" in raw, "missing required key 'page_number'", pointer)
    number = raw["page_number"]
    _require(
        isinstance(number, int) and not isinstance(number, bool) and number >= 1,
        "page_number must be a positive integer",
        pointer + "/page_number",
    )
    _require("blocks" in raw, "missing required key 'blocks'", pointer)
    raw_blocks = raw["blocks"]
    _require(isinstance(raw_blocks, list), "blocks must be a list", pointer + "/blocks")
    blocks = tuple(
        _parse_block(block, f"{pointer}/blocks/{i}") for i, block in enumerate(raw_blocks)
    )
    return Page(page_number=number, blocks=blocks)


def parse_document(raw: object, *, default_source: str = "") -> ParsedDocument:
    """Validate an already-deserialized ingestion object into a ParsedDocument."""
    _require(isinstance(raw, dict), "document must be a JSON object", "")
    assert isinstance(raw, dict)
    _require("doc_id" in raw, "missing required key 'doc_id'", "/doc_id")
    doc_id = raw["doc_id"]
    _require(
        isinstance(doc_id, str) and doc_id != "", "doc_id must be a non-empty string", "/doc_id"
    )
    _require("pages" in raw, "missing required key 'pages'", "/pages")
    raw_pages = raw["pages"]
    _require(isinstance(raw_pages, list), "pages must be a list", "/pages")
    pages = tuple(_parse_page(page, f"/pages/{i}") for i, page in enumerate(raw_pages))

    seen: dict[int, int] = {}
    last = 0
    for i, page in enumerate(pages):
        if page.page_number in seen:
            raise MalformedInput(
                f"duplicate page_number {page.page_number} (also at /pages/{seen[page.page_number]})",
                f"/pages/{i}/page_number",
            )
        _require(
            page.page_number > last,
            f"page_number {page.page_number} out of ascending order",
            f"/pages/{i}/page_number",
        )
        seen[page.page_number] = i
        last = page.page_number

    source_path = raw.get("source_path", default_source)
    _require(isinstance(source_path, str), "source_path must be a string", "/source_path")
    metadata = raw.get("metadata", {})
    _require(isinstance(metadata, dict), "metadata must be an object", "/metadata")
    return ParsedDocument(
        doc_id=doc_id, source_path=source_path, pages=pages, metadata=dict(metadata)
    )


def load_document(path: str | Path) -> ParsedDocument:
    """Load and validate one ingestion JSON file.

    Raises MalformedInput (with a JSON pointer to the offending node) on
    schema violations and IoFailure when the file cannot be read.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read document file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON in {path}: {exc}", "") from exc
    return parse_document(raw, default_source=str(path))


def save_document(doc: ParsedDocument, path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_text(
            json.dumps(doc.to_json_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoFailure(f"cannot write document file {path}: {exc}") from exc


def flatten_text(
    doc: ParsedDocument, span: tuple[int, int] | None = None
) -> FlattenedText:
    """Join block texts in reading order with single newline separators.

    ``span`` restricts flattening to an inclusive (start_page, end_page)
    range. Blocks with empty text (permitted for table/other kinds) are
    skipped so every emitted character traces back to a real source block.
    Each provenance span covers its block's text plus the following
    separator, so the spans' segments concatenate to the output exactly.
    """
    if span is not None:
        first, last = doc.page_range()
        start, end = span
        if start > end or start < first or end > last or not doc.pages:
            raise SpanOutOfRange(
                f"span {start}..{end} outside document pages {first}..{last}"
            )
        pages = [p for p in doc.pages if start <= p.page_number <= end]
    else:
        pages = list(doc.pages)

    pieces: list[tuple[str, int, int]] = []  # (text, page_number, block_index)
    for page in pages:
        for index, block in enumerate(page.blocks):
            if block.text == "":
                continue
            pieces.append((block.text, page.page_number, index))

    parts: list[str] = []
    spans: list[ProvenanceSpan] = []
    offset = 0
    for i, (text, page_number, block_index) in enumerate(pieces):
        segment = text if i == len(pieces) - 1 else text + "\n"
        parts.append(segment)
        spans.append(ProvenanceSpan(offset, offset + len(segment), page_number, block_index))
        offset += len(segment)
    return FlattenedText(text="".join(parts), spans=tuple(spans))
