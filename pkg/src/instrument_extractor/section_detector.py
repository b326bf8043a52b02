"""Methods-section span detection over parsed documents.

Detection works on heading blocks only: the first heading whose normalized
text appears in the methods keyword table opens the span, and the next
results-family heading closes it. Whenever the section cannot be isolated
that way, the detector falls back to the full document, which downstream
steps treat as the input text. Keyword tables are config-overridable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .doc_model import ParsedDocument

METHODS_KEYWORDS = (
    "method",
    "methods",
    "methodology",
    "materials and methods",
    "data and methods",
    "research design",
)

RESULTS_KEYWORDS = (
    "result",
    "results",
    "findings",
    "analysis and results",
    "discussion",
)

HEADING_MATCH = "heading_match"
FALLBACK_FULL_TEXT = "fallback_full_text"

# Leading enumeration: arabic or roman numerals with dots/parens, e.g. "3.",
# "IV.", "2.1", "(3)". The lookahead keeps the roman branch from biting the
# first letter off words like "Methods" or "Discussion".
_LEADING_NUMBERING = re.compile(
    r"^\s*(?:\(?[0-9]+(?:\.[0-9]+)*\)?|\(?[ivxlcdm]+\)?(?![^\W\d_]))?[.):\-\s]*",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class SectionSpan:
    start_page: int
    end_page: int
    detection_mode: str  # HEADING_MATCH or FALLBACK_FULL_TEXT
    matched_heading: str | None = None

    def as_tuple(self) -> tuple[int, int]:
        return (self.start_page, self.end_page)


def normalize_heading(text: str) -> str:
    """Strip leading numbering/punctuation and collapse case and whitespace."""
    stripped = _LEADING_NUMBERING.sub("", text, count=1)
    stripped = stripped.strip().rstrip(".:").strip()
    return " ".join(stripped.lower().split())


def _heading_positions(
    doc: ParsedDocument, keywords: tuple[str, ...]
) -> list[tuple[int, int, int, str]]:
    """(page_number, page_idx, block_idx, raw_heading) for matching headings."""
    keyword_set = set(keywords)
    hits = []
    for page_idx, page in enumerate(doc.pages):
        for block_idx, block in enumerate(page.blocks):
            if block.kind != "heading":
                continue
            if normalize_heading(block.text) in keyword_set:
                hits.append((page.page_number, page_idx, block_idx, block.text))
    return hits


def detect_method_span(
    doc: ParsedDocument,
    methods_keywords: tuple[str, ...] = METHODS_KEYWORDS,
    results_keywords: tuple[str, ...] = RESULTS_KEYWORDS,
) -> SectionSpan:
    """Locate the methods-section page span, or fall back to the whole document.

    heading_match requires a methods-family heading that precedes a
    results-family heading: the span runs from the methods heading's page to
    the page before the results heading, inclusive of the results heading's
    page when the two share a page. Everything else (no methods heading,
    results before methods, no closing results heading) is the fallback path.
    """
    first_page, last_page = doc.page_range()
    fallback = SectionSpan(first_page, max(first_page, last_page), FALLBACK_FULL_TEXT)

    methods_hits = _heading_positions(doc, methods_keywords)
    if not methods_hits:
        return fallback
    m_page, m_page_idx, m_block_idx, m_heading = methods_hits[0]

    results_hits = _heading_positions(doc, results_keywords)
    closing = None
    for r_page, r_page_idx, r_block_idx, _ in results_hits:
        if (r_page_idx, r_block_idx) < (m_page_idx, m_block_idx):
            # A results-family section opens before methods: structure is not
            # the usual methods-then-results shape, so do not trust the match.
            return fallback
        if (r_page_idx, r_block_idx) > (m_page_idx, m_block_idx):
            closing = (r_page, r_page_idx, r_block_idx)
            break
    if closing is None:
        return fallback

    r_page = closing[0]
    end_page = r_page - 1 if r_page > m_page else r_page
    return SectionSpan(m_page, end_page, HEADING_MATCH, matched_heading=m_heading)
