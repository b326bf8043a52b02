"""Surface-name standardization against a canonical instrument dictionary.

Matching precedence is exact > alias > fuzzy > unmatched. "Exact" means the
surface's primary normalized key equals an entry's primary canonical key;
alias matches cover alias strings plus parenthesized acronym/expansion
variants on either side; fuzzy matches use normalized edit distance with a
high default threshold, biasing toward unmatched-passthrough rather than a
wrong canonicalization. Entries may point at a parent battery, which lets
callers collapse sub-tests into the parent instrument.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .errors import IoFailure, MalformedInput

if TYPE_CHECKING:  # pragma: no cover
    from .chain import InstrumentMention

EXACT = "exact"
ALIAS = "alias"
FUZZY = "fuzzy"
UNMATCHED = "unmatched"

_KIND_RANK = {EXACT: 3, ALIAS: 2, FUZZY: 1, UNMATCHED: 0}

DEFAULT_FUZZY_THRESHOLD = 0.90

_PAREN_GROUP = re.compile(r"\(([^()]*)\)")
_HYPHENS = re.compile(r"(?<=\w)[-‐‑–—](?=\w)")
_NON_KEY_CHARS = re.compile(r"[^0-9a-z\s]")


def _strip_accents(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def _finish_key(text: str) -> str:
    text = _strip_accents(text).lower()
    text = _HYPHENS.sub(" ", text)
    text = _NON_KEY_CHARS.sub("", text)
    return " ".join(text.split())


def normalize_key(s: str) -> str:
    """Canonical comparison form: lowercase, accent-free, punctuation-free.

    Parenthesized segments (acronym expansions) are dropped from the primary
    key; ``key_variants`` exposes them as separate comparison tokens.
    Intra-word hyphens become spaces. Idempotent.
    """
    return _finish_key(_PAREN_GROUP.sub(" ", s))


def key_variants(s: str) -> tuple[str, ...]:
    """Primary key plus one key per parenthesized segment, empties dropped."""
    variants = [normalize_key(s)]
    for group in _PAREN_GROUP.findall(s):
        variants.append(_finish_key(group))
    seen: set[str] = set()
    out = []
    for v in variants:
        if v and v not in seen:
            seen.add(v)
            out.append(v)
    return tuple(out)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance, two-row dynamic programming."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[len(b)]


def similarity(key_a: str, key_b: str) -> float:
    """1 - edit_distance/max(len); both arguments are normalize_key outputs."""
    if key_a == key_b:
        return 1.0
    longest = max(len(key_a), len(key_b))
    if longest == 0 or not key_a or not key_b:
        return 0.0
    return 1.0 - edit_distance(key_a, key_b) / longest


@dataclass(frozen=True)
class DictEntry:
    canonical_name: str
    aliases: tuple[str, ...] = ()
    parent: str | None = None
    default_type: str | None = None


@dataclass(frozen=True)
class CanonicalInstrument:
    canonical_name: str
    match_kind: str
    match_score: float
    surface_names: tuple[str, ...]


class InstrumentDictionary:
    """Immutable alias catalog with precomputed lookup indexes."""

    def __init__(self, entries: Iterable[DictEntry], version: str):
        self.entries: tuple[DictEntry, ...] = tuple(entries)
        self.version = version
        self._by_canonical = {e.canonical_name.lower(): e for e in self.entries}
        # Primary canonical key -> entry (first wins on collisions).
        self._exact: dict[str, DictEntry] = {}
        # Any other lexical variant (aliases + parenthesized forms) -> entry.
        self._alias: dict[str, DictEntry] = {}
        for entry in self.entries:
            canonical_variants = key_variants(entry.canonical_name)
            if canonical_variants:
                self._exact.setdefault(canonical_variants[0], entry)
            for variant in canonical_variants[1:]:
                self._alias.setdefault(variant, entry)
            for alias in entry.aliases:
                for variant in key_variants(alias):
                    self._alias.setdefault(variant, entry)
        # All (key, entry) pairs, for fuzzy scans; insertion order is file order.
        self._fuzzy_pool: list[tuple[str, DictEntry]] = []
        pooled: set[tuple[str, str]] = set()
        for entry in self.entries:
            keys = list(key_variants(entry.canonical_name))
            for alias in entry.aliases:
                keys.extend(key_variants(alias))
            for key in keys:
                tag = (key, entry.canonical_name)
                if tag not in pooled:
                    pooled.add(tag)
                    self._fuzzy_pool.append((key, entry))

    def entry(self, canonical_name: str) -> DictEntry | None:
        return self._by_canonical.get(canonical_name.lower())

    def root_of(self, entry: DictEntry) -> DictEntry:
        """Walk parent links to the ultimate battery ancestor."""
        current = entry
        while current.parent is not None:
            parent = self.entry(current.parent)
            if parent is None:  # loader forbids this; guard for hand-built dicts
                break
            current = parent
        return current

    def lookup(
        self, surface: str, fuzzy_threshold: float = DEFAULT_FUZZY_THRESHOLD
    ) -> tuple[DictEntry | None, str, float]:
        """Resolve one surface form to (entry, match_kind, match_score)."""
        variants = key_variants(surface)
        if not variants:
            return (None, UNMATCHED, 0.0)
        primary = variants[0]
        entry = self._exact.get(primary)
        if entry is not None:
            return (entry, EXACT, 1.0)
        for variant in variants:
            entry = self._alias.get(variant)
            if entry is None and variant != primary:
                entry = self._exact.get(variant)
            if entry is not None:
                return (entry, ALIAS, 1.0)
        best: tuple[float, str, DictEntry] | None = None
        for key, candidate in self._fuzzy_pool:
            for variant in variants:
                score = similarity(variant, key)
                if score < fuzzy_threshold:
                    continue
                ranking = (-score, candidate.canonical_name)
                if best is None or ranking < (-best[0], best[1]):
                    best = (score, candidate.canonical_name, candidate)
        if best is not None:
            return (best[2], FUZZY, best[0])
        return (None, UNMATCHED, 0.0)


def validate_dictionary(raw: object) -> list[tuple[str, str]]:
    """Collect (pointer, message) schema problems without raising."""
    problems: list[tuple[str, str]] = []
    if not isinstance(raw, dict):
        return [("", "dictionary file must be a JSON object")]
    if not isinstance(raw.get("version"), str) or not raw.get("version"):
        problems.append(("/version", "version must be a non-empty string"))
    entries = raw.get("entries")
    if not isinstance(entries, list):
        problems.append(("/entries", "entries must be a list"))
        return problems

    canonical_seen: dict[str, int] = {}
    alias_seen: dict[str, int] = {}
    for i, item in enumerate(entries):
        pointer = f"/entries/{i}"
        if not isinstance(item, dict):
            problems.append((pointer, "entry must be an object"))
            continue
        name = item.get("canonical_name")
        if not isinstance(name, str) or not name:
            problems.append((pointer + "/canonical_name", "canonical_name must be a non-empty string"))
            continue
        lowered = name.lower()
        if lowered in canonical_seen:
            problems.append(
                (pointer + "/canonical_name",
                 f"duplicate canonical name (case-insensitive) also at /entries/{canonical_seen[lowered]}")
            )
        canonical_seen[lowered] = i
        aliases = item.get("aliases", [])
        if not isinstance(aliases, list) or any(not isinstance(a, str) for a in aliases):
            problems.append((pointer + "/aliases", "aliases must be a list of strings"))
            aliases = []
        for j, alias in enumerate(aliases):
            key = alias.lower()
            if key in alias_seen:
                problems.append(
                    (f"{pointer}/aliases/{j}",
                     f"alias {alias!r} duplicated across entries (also at {alias_seen[key]})")
                )
            else:
                alias_seen[key] = f"{pointer}/aliases/{j}"
        parent = item.get("parent")
        if parent is not None and not isinstance(parent, str):
            problems.append((pointer + "/parent", "parent must be a string canonical name"))
        default_type = item.get("default_type")
        if default_type is not None and not isinstance(default_type, str):
            problems.append((pointer + "/default_type", "default_type must be a string"))

    # Parent resolution and cycle detection (only over well-formed entries).
    names = {item.get("canonical_name", "").lower(): i
             for i, item in enumerate(entries) if isinstance(item, dict)}
    parent_of: dict[int, int] = {}
    for i, item in enumerate(entries):
        if not isinstance(item, dict):
            continue
        parent = item.get("parent")
        if isinstance(parent, str):
            target = names.get(parent.lower())
            if target is None:
                problems.append((f"/entries/{i}/parent", f"parent {parent!r} names no entry"))
            else:
                parent_of[i] = target
    for start in parent_of:
        seen = {start}
        node = start
        while node in parent_of:
            node = parent_of[node]
            if node in seen:
                problems.append((f"/entries/{start}/parent", "parent links form a cycle"))
                break
            seen.add(node)
    return problems


def parse_dictionary(raw: object) -> InstrumentDictionary:
    problems = validate_dictionary(raw)
    if problems:
        pointer, message = problems[0]
        raise MalformedInput(message, pointer)
    assert isinstance(raw, dict)
    entries = [
        DictEntry(
            canonical_name=item["canonical_name"],
            aliases=tuple(item.get("aliases", [])),
            parent=item.get("parent"),
            default_type=item.get("default_type"),
        )
        for item in raw["entries"]
    ]
    return InstrumentDictionary(entries, version=raw["version"])


def load_dictionary(path: str | Path) -> InstrumentDictionary:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read dictionary file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON in {path}: {exc}", "") from exc
    return parse_dictionary(raw)


@dataclass
class _Group:
    canonical_name: str
    match_kind: str
    match_score: float
    surface_names: list[str] = field(default_factory=list)

    def absorb(self, kind: str, score: float, surface: str) -> None:
        if _KIND_RANK[kind] > _KIND_RANK[self.match_kind]:
            self.match_kind = kind
        self.match_score = max(self.match_score, score)
        if surface not in self.surface_names:
            self.surface_names.append(surface)


def normalize(
    mentions: Iterable["InstrumentMention | str"],
    dictionary: InstrumentDictionary,
    collapse_subtests: bool = False,
    fuzzy_threshold: float = DEFAULT_FUZZY_THRESHOLD,
) -> list[CanonicalInstrument]:
    """Map mentions (or bare surface strings) to canonical instruments.

    Each distinct surface form resolves once; mentions landing on the same
    canonical name merge, accumulating surface forms in first-seen order.
    With ``collapse_subtests``, entries with a parent are replaced by their
    ultimate ancestor before merging, so the operation is idempotent.
    """
    surfaces: list[str] = []
    seen: set[str] = set()
    for mention in mentions:
        surface = mention if isinstance(mention, str) else mention.surface_name
        if surface not in seen:
            seen.add(surface)
            surfaces.append(surface)

    groups: dict[str, _Group] = {}
    order: list[str] = []
    for surface in surfaces:
        entry, kind, score = dictionary.lookup(surface, fuzzy_threshold)
        if entry is None:
            canonical = normalize_key(surface)
        else:
            if collapse_subtests:
                entry = dictionary.root_of(entry)
            canonical = entry.canonical_name
        group = groups.get(canonical)
        if group is None:
            groups[canonical] = _Group(canonical, kind, score, [surface])
            order.append(canonical)
        else:
            group.absorb(kind, score, surface)

    return [
        CanonicalInstrument(
            canonical_name=g.canonical_name,
            match_kind=g.match_kind,
            match_score=g.match_score,
            surface_names=tuple(g.surface_names),
        )
        for g in (groups[name] for name in order)
    ]
