"""Name normalization and dictionary matching, with an edit-distance oracle."""

import random
import string

import pytest

from instrument_extractor.errors import IoFailure, MalformedInput
from instrument_extractor.normalizer import (
    ALIAS,
    DEFAULT_FUZZY_THRESHOLD,
    EXACT,
    FUZZY,
    UNMATCHED,
    key_variants,
    load_dictionary,
    normalize,
    normalize_key,
    parse_dictionary,
    similarity,
    validate_dictionary,
)


def _dict(*entries, version="t1"):
    return parse_dictionary({"version": version, "entries": list(entries)})


def levenshtein(a: str, b: str) -> int:
    """Textbook DP, the independent oracle for the package's similarity."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def random_key_string(rng: random.Random) -> str:
    alphabet = (
        string.ascii_letters
        + string.digits
        + " -()[]'éüÅ–—_.,:;/"
    )
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))


# ------------------------------------------------------------ key variants --


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("CLASS (Classroom Assessment Scoring System)", "class"),
        ("Woodcock-Johnson III", "woodcock johnson iii"),
        ("Éducation—Test v2", "education test v2"),
        ("Teacher   Stress\tDiary", "teacher stress diary"),
        ("MSLQ", "mslq"),
        ("", ""),
        ("(only parenthetical)", ""),
        ("self-regulated learning", "self regulated learning"),
    ],
)
def test_normalize_key(raw, expected):
    assert normalize_key(raw) == expected


def test_key_variants_expose_parenthesized_segments():
    assert key_variants("CLASS (Classroom Assessment Scoring System)") == (
        "class",
        "classroom assessment scoring system",
    )
    assert key_variants("MSLQ") == ("mslq",)


def test_normalize_key_idempotent_on_random_strings():
    rng = random.Random(99)
    for _ in range(300):
        s = random_key_string(rng)
        once = normalize_key(s)
        assert normalize_key(once) == once


# ----------------------------------------------------------------- lookup --


def test_alias_lookup_is_case_insensitive(dictionary):
    entry, kind, score = dictionary.lookup("Classroom assessment scoring system")
    assert entry.canonical_name == "CLASS (Classroom Assessment Scoring System)"
    assert kind == ALIAS
    assert score == 1.0


def test_exact_lookup_on_primary_key(dictionary):
    entry, kind, score = dictionary.lookup("CLASS")
    assert entry.canonical_name.startswith("CLASS")
    assert (kind, score) == (EXACT, 1.0)


def test_unmatched_surface_passes_through(dictionary):
    entry, kind, score = dictionary.lookup("Teacher Stress Diary")
    assert entry is None
    assert (kind, score) == (UNMATCHED, 0.0)


def test_near_miss_surface_resolves_to_battery(dictionary):
    # One-word misspelling of the battery name stays above the 0.90 bar.
    entry, kind, score = dictionary.lookup("Woodcock Johnsen III Tests of Achievement")
    assert entry.canonical_name == "Woodcock-Johnson III Tests of Achievement"
    assert kind == FUZZY
    assert score >= 0.9


def test_hyphen_and_case_variant_is_not_fuzzy(dictionary):
    # Punctuation-only differences normalize away, so this is a clean match,
    # not a fuzzy one.
    entry, kind, score = dictionary.lookup("Woodcock Johnson III tests of achievement")
    assert entry.canonical_name == "Woodcock-Johnson III Tests of Achievement"
    assert (kind, score) == (EXACT, 1.0)


def test_exact_beats_alias_beats_fuzzy():
    d = _dict(
        {"canonical_name": "Alpha Beta"},
        {"canonical_name": "Gamma", "aliases": ["Alpha Beta"]},
        {"canonical_name": "Alpha Betz"},
    )
    entry, kind, _ = d.lookup("Alpha Beta")
    assert (entry.canonical_name, kind) == ("Alpha Beta", EXACT)
    d = _dict(
        {"canonical_name": "Delta Epsilon Zeta"},
        {"canonical_name": "Other", "aliases": ["Delta Epsilon Zetb"]},
    )
    entry, kind, _ = d.lookup("Delta Epsilon Zetb")
    assert (entry.canonical_name, kind) == ("Other", ALIAS)


def test_fuzzy_threshold_boundary():
    d = _dict({"canonical_name": "abcdefghij"})
    entry, kind, score = d.lookup("abcdefghiX")  # distance 1 over length 10
    assert kind == FUZZY and score == pytest.approx(0.9)
    entry, kind, score = d.lookup("abcdefghXY")  # distance 2: below the bar
    assert (entry, kind, score) == (None, UNMATCHED, 0.0)
    entry, kind, score = d.lookup("abcdefghiX", fuzzy_threshold=0.95)
    assert (entry, kind) == (None, UNMATCHED)


def test_fuzzy_tie_prefers_lexicographically_smaller_canonical():
    d = _dict(
        {"canonical_name": "instrument alphb"},
        {"canonical_name": "instrument alpha"},
    )
    entry, kind, score = d.lookup("instrument alphx")
    assert entry.canonical_name == "instrument alpha"
    assert kind == FUZZY


def test_fuzzy_scores_match_edit_distance_oracle():
    rng = random.Random(4242)
    letters = string.ascii_lowercase
    words = ["survey", "scale", "inventory", "battery", "index", "profile", "form"]
    for _ in range(120):
        base = " ".join(rng.choice(words) for _ in range(rng.randint(2, 4)))
        d = _dict({"canonical_name": base})
        chars = list(base)
        for _ in range(rng.randint(1, 2)):
            op = rng.choice(("sub", "ins", "del"))
            pos = rng.randrange(len(chars))
            if op == "sub":
                chars[pos] = rng.choice(letters)
            elif op == "ins":
                chars.insert(pos, rng.choice(letters))
            elif len(chars) > 1:
                del chars[pos]
        surface = "".join(chars)
        key = normalize_key(surface)
        if key == base:
            continue  # the edit was normalized away; nothing fuzzy to check
        expected = 1.0 - levenshtein(key, base) / max(len(key), len(base))
        assert similarity(key, base) == pytest.approx(expected)
        entry, kind, score = d.lookup(surface)
        if expected >= DEFAULT_FUZZY_THRESHOLD:
            assert entry is not None and kind == FUZZY
            assert score == pytest.approx(expected)
        else:
            assert (entry, kind) == (None, UNMATCHED)


# ------------------------------------------------------------- validation --


def test_validate_reports_duplicates_and_parent_problems():
    problems = validate_dictionary(
        {
            "version": "1",
            "entries": [
                {"canonical_name": "Alpha Test"},
                {"canonical_name": "ALPHA TEST"},
                {"canonical_name": "Beta", "aliases": ["Shared Alias"]},
                {"canonical_name": "Gamma", "aliases": ["Shared Alias"], "parent": "Nobody"},
                {"canonical_name": "Cyc1", "parent": "Cyc2"},
                {"canonical_name": "Cyc2", "parent": "Cyc1"},
            ],
        }
    )
    by_pointer = dict(problems)
    assert "duplicate canonical name" in by_pointer["/entries/1/canonical_name"]
    assert "duplicated across entries" in by_pointer["/entries/3/aliases/0"]
    assert by_pointer["/entries/3/parent"] == "parent 'Nobody' names no entry"
    assert by_pointer["/entries/4/parent"] == "parent links form a cycle"
    assert by_pointer["/entries/5/parent"] == "parent links form a cycle"


def test_validate_structural_problems():
    assert validate_dictionary([1]) == [("", "dictionary file must be a JSON object")]
    assert ("/version", "version must be a non-empty string") in validate_dictionary(
        {"entries": []}
    )
    assert any(
        pointer == "/entries/0/canonical_name"
        for pointer, _ in validate_dictionary({"version": "v", "entries": [{}]})
    )


def test_parse_dictionary_raises_on_first_problem():
    with pytest.raises(MalformedInput) as exc_info:
        parse_dictionary({"version": "v", "entries": [{"canonical_name": ""}]})
    assert exc_info.value.pointer == "/entries/0/canonical_name"
    assert "(at /entries/0/canonical_name)" in str(exc_info.value)


def test_load_dictionary_errors(tmp_path):
    with pytest.raises(IoFailure, match="cannot read dictionary file"):
        load_dictionary(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    with pytest.raises(MalformedInput, match="invalid JSON"):
        load_dictionary(bad)


def test_fixture_dictionary_is_valid(fixtures_dir):
    import json

    raw = json.loads((fixtures_dir / "dictionary.json").read_text("utf-8"))
    assert validate_dictionary(raw) == []


# -------------------------------------------------------------- normalize --


def test_normalize_merges_acronym_and_expansion(dictionary):
    out = normalize(
        ["Motivated Strategies for Learning Questionnaire (MSLQ)", "MSLQ"], dictionary
    )
    assert len(out) == 1
    inst = out[0]
    assert inst.canonical_name == "Motivated Strategies for Learning Questionnaire"
    assert inst.surface_names == (
        "Motivated Strategies for Learning Questionnaire (MSLQ)",
        "MSLQ",
    )
    assert inst.match_kind == EXACT
    assert inst.match_score == 1.0


def test_normalize_accepts_mentions_and_strings(dictionary):
    from instrument_extractor.chain import InstrumentMention

    mention = InstrumentMention(surface_name="SES", chunk_index=0)
    out = normalize([mention, "Student Engagement Survey"], dictionary)
    assert len(out) == 1
    assert out[0].canonical_name == "Student Engagement Survey"


def test_normalize_unmatched_passthrough(dictionary):
    out = normalize(["Teacher Interview Protocol"], dictionary)
    assert len(out) == 1
    assert out[0].canonical_name == "teacher interview protocol"
    assert out[0].match_kind == UNMATCHED
    assert out[0].match_score == 0.0
    assert out[0].surface_names == ("Teacher Interview Protocol",)


def test_normalize_duplicate_surfaces_resolve_once(dictionary):
    out = normalize(["MSLQ", "MSLQ", "mslq"], dictionary)
    assert len(out) == 1
    assert out[0].surface_names == ("MSLQ", "mslq")


def test_collapse_subtests_folds_into_battery(dictionary):
    mentions = ["Woodcock-Johnson III Tests of Achievement", "Letter-Word Identification"]
    spread = normalize(mentions, dictionary, collapse_subtests=False)
    assert sorted(c.canonical_name for c in spread) == [
        "WJ-III Letter-Word Identification Subtest",
        "Woodcock-Johnson III Tests of Achievement",
    ]
    folded = normalize(mentions, dictionary, collapse_subtests=True)
    assert len(folded) == 1
    assert folded[0].canonical_name == "Woodcock-Johnson III Tests of Achievement"
    assert folded[0].surface_names == tuple(mentions)


def test_collapse_follows_parent_chain_to_root():
    d = _dict(
        {"canonical_name": "Root Battery"},
        {"canonical_name": "Mid Form", "parent": "Root Battery"},
        {"canonical_name": "Leaf Subtest", "parent": "Mid Form"},
    )
    out = normalize(["Leaf Subtest"], d, collapse_subtests=True)
    assert [c.canonical_name for c in out] == ["Root Battery"]


def test_collapse_is_idempotent(dictionary):
    first = normalize(
        ["WJ-III", "Letter-Word Identification", "MSLQ"], dictionary, collapse_subtests=True
    )
    again = normalize(
        [c.canonical_name for c in first], dictionary, collapse_subtests=True
    )
    assert [c.canonical_name for c in again] == [c.canonical_name for c in first]


def test_normalize_keeps_first_seen_order(dictionary):
    out = normalize(["Teacher Stress Diary", "MSLQ", "SES"], dictionary)
    assert [c.canonical_name for c in out] == [
        "teacher stress diary",
        "Motivated Strategies for Learning Questionnaire",
        "Student Engagement Survey",
    ]
