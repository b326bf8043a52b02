"""Shared definitions behind the bundled fixtures.

Everything the fixture corpus asserts lives here exactly once: the synthetic
documents, the dictionary and gold annotations built for them, and the
scripted responder that answers pipeline prompts deterministically. The
generator script records transcripts by running the real pipeline against
ScriptedResponder; tests import the same constants to know what the replayed
outputs must contain.
"""

from __future__ import annotations

import json
from typing import Any

from instrument_extractor.chunker import count_tokens
from instrument_extractor.gateway import PromptRequest, UsageStats
from instrument_extractor.normalizer import key_variants


def h(level: int, text: str) -> dict[str, Any]:
    return {"kind": "heading", "level": level, "text": text}


def p(text: str) -> dict[str, Any]:
    return {"kind": "paragraph", "text": text}


def make_doc(doc_id: str, pages: list[tuple[int, list[dict[str, Any]]]]) -> dict[str, Any]:
    return {
        "doc_id": doc_id,
        "source_path": f"{doc_id}.pdf",
        "metadata": {},
        "pages": [{"page_number": n, "blocks": blocks} for n, blocks in pages],
    }


# --------------------------------------------------------------- corpus ----

DOC001_METHODS_P1 = (
    "We observed forty elementary classrooms using the CLASS (Classroom "
    "Assessment Scoring System). Trained observers scored each lesson on "
    "classroom organization, preventive discipline, and time management, and "
    "the ratings describe how students and teachers interact during "
    "instruction."
)
DOC001_METHODS_P2 = (
    "We did not readminister the district climate survey used in earlier "
    "evaluations, because self-reported climate was outside the scope of "
    "this study. The observation scores yield a teacher interaction outcome "
    "for each classroom."
)

DOC006_METHODS_P1 = (
    "Research assistants completed the Classroom Observation Checklist "
    "during every visit, noting whether feedback routines were present. The "
    "checklist covers feedback frequency and feedback specificity, and "
    "visits were scheduled across the fall term so that every classroom was "
    "seen at least four times by a trained assistant."
)
DOC006_METHODS_P2 = (
    "Each spring, students took the district Reading Comprehension Test. "
    "The test reports a comprehension score used to track growth, and "
    "testing sessions followed the district's standard administration "
    "manual in every school. Scores from earlier cohorts were available for "
    "benchmarking, and de-identified rosters let us link test records to "
    "observation visits at the classroom level. Testing windows were "
    "announced two weeks ahead, and make-up sessions ran in the final week "
    "of the term for absent students."
)
DOC006_METHODS_P3 = (
    "Assistants revisited a random subsample of classrooms in winter and "
    "completed the Classroom Observation Checklist a second time to "
    "estimate stability. Winter visits followed the same observation "
    "procedure as the fall round and were scheduled without notifying the "
    "classroom teachers in advance."
)

CORPUS_DOCS: list[dict[str, Any]] = [
    make_doc("doc001", [
        (1, [h(1, "1. Introduction"),
             p("Classroom climate shapes how teachers manage instruction, yet "
               "self-reported measures capture little of the moment-to-moment "
               "organization of lessons.")]),
        (2, [h(1, "2. Methods"), p(DOC001_METHODS_P1), p(DOC001_METHODS_P2)]),
        (3, [h(1, "3. Results"),
             p("Observed classrooms varied widely in their organization scores."),
             h(1, "4. Discussion"),
             p("Implications for professional development follow.")]),
    ]),
    make_doc("doc002", [
        (1, [h(1, "1. Introduction"),
             p("Engagement in middle school science predicts later course "
               "taking, and classroom routines may shape it.")]),
        (2, [h(1, "2. Method"),
             p("All sixth graders completed the Student Engagement Survey in "
               "October and again in May. The survey asks students to rate "
               "their behavioral engagement and emotional engagement, "
               "producing an engagement level score for each student."),
             p("We also conducted interviews with twelve teachers using a "
               "semi-structured Teacher Interview Protocol. The protocol "
               "probes instructional practices and how teachers perceive "
               "their autonomy, and the interviews yield a perceived "
               "autonomy rating.")]),
        (3, [h(1, "3. Results"),
             p("Engagement rose modestly between the two waves.")]),
    ]),
    # No methods-family heading anywhere: the detector must fall back.
    make_doc("doc003", [
        (1, [h(1, "Background"),
             p("Early decoding predicts later comprehension, and this report "
               "documents achievement trends in one district.")]),
        (2, [h(1, "Data"),
             p("Achievement was assessed with the Woodcock-Johnson III Tests "
               "of Achievement administered to all participating students "
               "each spring, and the scores summarize reading achievement "
               "across the district."),
             p("For decoding specifically, examiners administered the WJ-III "
               "Letter-Word Identification subtest, which reports a "
               "letter-word identification score.")]),
        (3, [h(1, "Conclusion"),
             p("Trends were flat over the three years studied.")]),
    ]),
    make_doc("doc004", [
        (1, [h(1, "1. Introduction"),
             p("Self-regulated learning supports persistence in introductory "
               "courses.")]),
        (2, [h(1, "2. Materials and Methods"),
             p("Participants completed the Motivated Strategies for Learning "
               "Questionnaire (MSLQ) during the third week of the term, and "
               "the questionnaire was administered to undergraduate students "
               "in three course sections."),
             p("The MSLQ measures self-regulated learning and motivation, "
               "and we report a strategy use score for each participant.")]),
        (3, [h(1, "3. Analysis and Results"),
             p("Strategy use correlated with course grades.")]),
    ]),
    make_doc("doc005", [
        (1, [h(1, "1. Introduction"),
             p("Teacher wellbeing varies day to day, and daily records may "
               "reveal its rhythms.")]),
        (2, [h(1, "Methodology"),
             p("Twenty teachers kept a Teacher Stress Diary for six weeks, "
               "recording occupational stress at the end of each school day, "
               "and each entry produces a daily stress rating.")]),
        (3, [h(1, "Results"), p("Reported stress peaked midweek.")]),
    ]),
    # Methods section spans two pages and exceeds the fixture chunk budget,
    # so the checklist is mentioned again in a later chunk.
    make_doc("doc006", [
        (1, [h(1, "1. Introduction"),
             p("Formative feedback routines may lift reading outcomes, and "
               "this study tracks both sides of that relationship.")]),
        (2, [h(1, "2.0 Research Design"), p(DOC006_METHODS_P1), p(DOC006_METHODS_P2)]),
        (3, [p(DOC006_METHODS_P3)]),
        (4, [h(1, "4. Findings"),
             p("Checklist scores were stable across rounds, and comprehension "
               "rose modestly.")]),
    ]),
]

DICTIONARY: dict[str, Any] = {
    "version": "fixtures-1",
    "entries": [
        {"canonical_name": "CLASS (Classroom Assessment Scoring System)",
         "aliases": ["Classroom Assessment Scoring System"],
         "default_type": "observation_protocol"},
        {"canonical_name": "Student Engagement Survey",
         "aliases": ["SES"],
         "default_type": "survey_questionnaire"},
        {"canonical_name": "Motivated Strategies for Learning Questionnaire",
         "aliases": ["MSLQ"],
         "default_type": "survey_questionnaire"},
        {"canonical_name": "Woodcock-Johnson III Tests of Achievement",
         "aliases": ["Woodcock-Johnson-III", "WJ-III"],
         "default_type": "test_assessment"},
        {"canonical_name": "WJ-III Letter-Word Identification Subtest",
         "aliases": ["Letter-Word Identification"],
         "parent": "Woodcock-Johnson III Tests of Achievement",
         "default_type": "test_assessment"},
        {"canonical_name": "Reading Comprehension Test",
         "aliases": [],
         "default_type": "test_assessment"},
    ],
}

GOLD: list[dict[str, Any]] = [
    {"doc_id": "doc001", "instruments": [
        {"name": "CLASS", "type": "Observation Protocol",
         "respondents": ["Students", "Teachers"],
         "constructs": ["Classroom Organization", "Preventive Discipline",
                        "Time Management"],
         "outcomes": ["Teacher Interaction"]}]},
    {"doc_id": "doc002", "instruments": [
        {"name": "Student Engagement Survey", "type": "survey",
         "respondents": ["Students"]},
        {"name": "Teacher Interview Protocol", "type": "interview",
         "respondents": ["Teachers"]}]},
    {"doc_id": "doc003", "instruments": [
        {"name": "Woodcock-Johnson III", "type": "test"}]},
    {"doc_id": "doc004", "instruments": [
        {"name": "MSLQ", "type": "questionnaire",
         "constructs": ["Self-Regulated Learning", "Motivation"]}]},
    {"doc_id": "doc005", "instruments": [
        {"name": "Teacher Stress Diary", "type": "other tool"}]},
    {"doc_id": "doc006", "instruments": [
        {"name": "Classroom Observation Checklist"},
        {"name": "Reading Comprehension Test", "type": "test"}]},
]

# Every instrument name exactly as planted in document text. The responder
# scans passages for these, longest first, so "MSLQ" does not double-fire
# inside the spelled-out questionnaire name.
SURFACES: tuple[str, ...] = (
    "CLASS (Classroom Assessment Scoring System)",
    "district climate survey",
    "Student Engagement Survey",
    "Teacher Interview Protocol",
    "Woodcock-Johnson III Tests of Achievement",
    "WJ-III Letter-Word Identification subtest",
    "Motivated Strategies for Learning Questionnaire (MSLQ)",
    "MSLQ",
    "Teacher Stress Diary",
    "Classroom Observation Checklist",
    "Reading Comprehension Test",
)

# Named in doc001's methods text but never administered by that study; the
# decision step must drop it while extraction alone keeps it.
MENTIONED_ONLY: frozenset[str] = frozenset({"district climate survey"})

# Relation answers keyed by the anchor name the normalizer produces
# (dictionary canonical for matched surfaces, normalized key otherwise).
# Evidence quotes are copied verbatim from the documents above.
RELATION_ATTRS: dict[str, dict[str, Any]] = {
    "CLASS (Classroom Assessment Scoring System)": {
        "type": "Observation Protocol",
        "respondents": ["Students", "Teachers"],
        "constructs": ["Classroom Organization", "Preventive Discipline",
                       "Time Management"],
        "outcomes": ["Teacher Interaction"],
        "evidence": {
            "type": ["We observed forty elementary classrooms using the CLASS"],
            "respondents": ["how students and teachers interact during instruction"],
            "constructs": ["scored each lesson on classroom organization, "
                           "preventive discipline, and time management"],
            "outcomes": ["a teacher interaction outcome for each classroom"],
        },
    },
    "district climate survey": {
        "type": "Survey",
        "respondents": ["School Staff"],
        "constructs": ["School Climate"],
        "outcomes": ["Climate Rating"],
        "evidence": {
            "type": ["the district climate survey used in earlier evaluations"],
        },
    },
    "Student Engagement Survey": {
        "type": "Survey",
        "respondents": ["Students"],
        "constructs": ["Behavioral Engagement", "Emotional Engagement"],
        "outcomes": ["Engagement Level"],
        "evidence": {
            "type": ["All sixth graders completed the Student Engagement Survey"],
            "respondents": ["asks students to rate"],
            "constructs": ["behavioral engagement and emotional engagement"],
            "outcomes": ["an engagement level score for each student"],
        },
    },
    "teacher interview protocol": {
        "type": "Interview Protocol",
        "respondents": ["Teachers"],
        "constructs": ["Instructional Practices", "Perceived Autonomy"],
        "outcomes": ["Perceived Autonomy Rating"],
        "evidence": {
            "type": ["a semi-structured Teacher Interview Protocol"],
            "respondents": ["interviews with twelve teachers"],
            "constructs": ["probes instructional practices"],
            "outcomes": ["a perceived autonomy rating"],
        },
    },
    "Woodcock-Johnson III Tests of Achievement": {
        "type": "Test",
        "respondents": ["Students"],
        "constructs": ["Reading Achievement"],
        "outcomes": ["Reading Achievement Score"],
        "evidence": {
            "type": ["Achievement was assessed with the Woodcock-Johnson III "
                     "Tests of Achievement"],
            "respondents": ["administered to all participating students"],
            "constructs": ["the scores summarize reading achievement"],
            "outcomes": ["summarize reading achievement across the district"],
        },
    },
    "WJ-III Letter-Word Identification Subtest": {
        "type": "Assessment",
        "respondents": ["Students"],
        "constructs": ["Decoding"],
        "outcomes": ["Letter-Word Identification Score"],
        "evidence": {
            "type": ["examiners administered the WJ-III Letter-Word "
                     "Identification subtest"],
            "constructs": ["For decoding specifically"],
            "outcomes": ["reports a letter-word identification score"],
        },
    },
    "Motivated Strategies for Learning Questionnaire": {
        "type": "Survey/Questionnaire",
        "respondents": ["Undergraduate Students"],
        "constructs": ["Self-Regulated Learning", "Motivation"],
        "outcomes": ["Strategy Use"],
        "evidence": {
            "type": ["Participants completed the Motivated Strategies for "
                     "Learning Questionnaire"],
            "respondents": ["administered to undergraduate students"],
            "constructs": ["measures self-regulated learning and motivation"],
            "outcomes": ["a strategy use score for each participant"],
        },
    },
    "teacher stress diary": {
        "type": "Diary",
        "respondents": ["Teachers"],
        "constructs": ["Occupational Stress"],
        "outcomes": ["Daily Stress Rating"],
        "evidence": {
            "type": ["Twenty teachers kept a Teacher Stress Diary"],
            "constructs": ["recording occupational stress at the end of each "
                           "school day"],
            "outcomes": ["each entry produces a daily stress rating"],
        },
    },
    "classroom observation checklist": {
        "type": "Checklist",
        "respondents": ["Research Assistants"],
        "constructs": ["Feedback Frequency", "Feedback Specificity"],
        "outcomes": ["Feedback Routine Presence"],
        "evidence": {
            "type": ["completed the Classroom Observation Checklist during "
                     "every visit"],
            "constructs": ["covers feedback frequency and feedback specificity"],
            "outcomes": ["noting whether feedback routines were present"],
        },
    },
    "Reading Comprehension Test": {
        "type": "Test",
        "respondents": ["Students"],
        "constructs": ["Reading Comprehension"],
        "outcomes": ["Comprehension Score"],
        "evidence": {
            "type": ["students took the district Reading Comprehension Test"],
            "respondents": ["students took the district"],
            "constructs": ["The test reports a comprehension score"],
            "outcomes": ["a comprehension score used to track growth"],
        },
    },
}


def find_surfaces(text: str) -> list[str]:
    """Planted surface forms present in ``text``, in order of appearance.

    Longer surfaces claim their character span first, so a short name that is
    a substring of a longer one only matches where it stands alone.
    """
    claimed: list[tuple[int, int]] = []
    found: list[tuple[int, str]] = []
    for surface in sorted(SURFACES, key=len, reverse=True):
        start = 0
        while True:
            i = text.find(surface, start)
            if i == -1:
                break
            span = (i, i + len(surface))
            if not any(a < span[1] and span[0] < b for a, b in claimed):
                claimed.append(span)
                found.append((i, surface))
            start = i + 1
    seen: set[str] = set()
    ordered: list[str] = []
    for _, surface in sorted(found):
        if surface not in seen:
            seen.add(surface)
            ordered.append(surface)
    return ordered


def _between(text: str, start_marker: str, end_marker: str | None = None) -> str:
    i = text.index(start_marker) + len(start_marker)
    if end_marker is None:
        return text[i:]
    return text[i:text.index(end_marker, i)]


def consolidate_names(names: list[str]) -> list[str]:
    """What the scripted decision step keeps: used instruments, merged."""
    kept: list[str] = []
    variant_sets: list[set[str]] = []
    for name in names:
        if name.lower() in MENTIONED_ONLY:
            continue
        variants = set(key_variants(name))
        if any(variants & prior for prior in variant_sets):
            continue
        kept.append(name)
        variant_sets.append(variants)
    return kept


def scripted_reply(system_text: str, user_text: str) -> str:
    """Deterministic stand-in for a model, dispatching on prompt shape."""
    if "Candidate mentions (JSON):" in user_text:
        rows = json.loads(_between(user_text, "Candidate mentions (JSON):\n",
                                   "\n\nChunk summaries:"))
        names = consolidate_names([row["name"] for row in rows])
        return json.dumps({"instruments": [{"name": n} for n in names]},
                          ensure_ascii=False)
    if 'the research instrument "' in user_text:
        anchor = _between(user_text, 'the research instrument "', '" (also referred')
        spec = RELATION_ATTRS[anchor]
        return json.dumps(
            {"name": anchor, "type": spec["type"],
             "respondents": spec["respondents"], "constructs": spec["constructs"],
             "outcomes": spec["outcomes"], "evidence": spec["evidence"]},
            ensure_ascii=False)
    if "Identify every research instrument" in user_text:
        passage = _between(user_text, "Passage:\n", "\n\nRespond with")
        mentions = [{"name": s, "evidence": s} for s in find_surfaces(passage)]
        return json.dumps({"instruments": mentions}, ensure_ascii=False)
    if "Explain in one short paragraph" in user_text:
        passage = _between(user_text, "Passage:\n")
        used = [s for s in find_surfaces(passage) if s.lower() not in MENTIONED_ONLY]
        if used:
            return "The study collects its data with " + ", ".join(used) + "."
        return "This passage does not describe how the study collects data."
    raise AssertionError(f"scripted responder got an unrecognized prompt: {user_text[:80]!r}")


class ScriptedResponder:
    """Backend whose answers come from the fixture tables above."""

    name = "scripted"

    def __init__(self) -> None:
        self.log: list[tuple[str, str]] = []  # (fingerprint, request_id)

    def send(self, req: PromptRequest, user_text: str,
             request_fingerprint: str) -> tuple[str, UsageStats]:
        text = scripted_reply(req.system_text, req.user_text)
        self.log.append((request_fingerprint, req.request_id))
        usage = UsageStats(
            input_tokens=count_tokens(req.system_text) + count_tokens(user_text),
            output_tokens=count_tokens(text),
            wall_time_ms=0,
            backend_name=self.name,
            requests=1,
        )
        return text, usage


# ------------------------------------------------- detection corpus --------

HEADING_MATCH = "heading_match"
FALLBACK = "fallback_full_text"


def _filler_pages(numbers: list[int]) -> list[tuple[int, list[dict[str, Any]]]]:
    return [(n, [p("Additional discussion and appendix text.")]) for n in numbers]


def _det(doc_id: str, pages: list[tuple[int, list[dict[str, Any]]]],
         start: int, end: int, mode: str) -> dict[str, Any]:
    return {"doc": make_doc(doc_id, pages),
            "start_page": start, "end_page": end, "mode": mode}


_INTRO = [(1, [h(1, "1. Introduction"), p("Opening remarks on the study.")])]

# 26 labeled layouts. det025 and det026 use methods headings outside the
# keyword tables, so the detector is expected to miss them: the labels say
# where the section really is, keeping the corpus accuracy at 24/26.
DETECTION_CORPUS: list[dict[str, Any]] = [
    _det("det001",
         _INTRO
         + [(2, [h(1, "2. Methods"), p("We sampled twenty schools.")]),
            (3, [h(1, "3. Results"), p("Scores rose.")])]
         + _filler_pages(list(range(4, 11))),
         2, 2, HEADING_MATCH),
    _det("det002",
         _INTRO
         + [(2, [h(1, "Method"), p("Participants were recruited by mail.")]),
            (3, [p("Further procedural detail.")]),
            (4, [h(1, "Results"), p("Findings follow.")])],
         2, 3, HEADING_MATCH),
    _det("det003",
         _INTRO
         + [(2, [h(1, "2. Methodology"), p("Design description."),
                 h(1, "3. Findings"), p("Same-page findings.")])],
         2, 2, HEADING_MATCH),
    _det("det004",
         _INTRO + _filler_pages([2])
         + [(3, [h(1, "Materials and Methods"), p("Apparatus and sample.")]),
            (4, [p("Procedure continued.")]),
            (5, [h(1, "Results"), p("Outcomes reported.")]),
            (6, [p("Closing remarks.")])],
         3, 4, HEADING_MATCH),
    _det("det005",
         _INTRO
         + [(2, [h(1, "DATA AND METHODS"), p("Administrative records were used.")]),
            (3, [h(1, "Discussion"), p("Interpretation of the estimates.")])],
         2, 2, HEADING_MATCH),
    _det("det006",
         _INTRO
         + [(2, [h(1, "3. Research Design"), p("A matched comparison design.")]),
            (3, [p("Measures and timeline.")]),
            (4, [h(1, "4. Analysis and Results"), p("Model estimates.")])],
         2, 3, HEADING_MATCH),
    _det("det007",
         _INTRO
         + [(2, [h(1, "IV. Methods"), p("Roman numbering style."),
                 h(1, "V. Results"), p("Estimates on the same page.")])],
         2, 2, HEADING_MATCH),
    _det("det008",
         _INTRO
         + [(2, [h(2, "2.1 Methods"), p("Nested numbering style.")]),
            (3, [h(1, "Findings"), p("What the study found.")])],
         2, 2, HEADING_MATCH),
    _det("det009",
         _INTRO
         + [(2, [h(1, "Methods:"), p("Trailing punctuation style.")]),
            (3, [h(1, "Results"), p("Outcome summary.")])],
         2, 2, HEADING_MATCH),
    _det("det010",
         [(1, [h(1, "Method"), p("The whole design fits one page.")]),
          (2, [h(1, "Results"), p("And the findings another.")])],
         1, 1, HEADING_MATCH),
    _det("det011",
         [(1, [h(1, "Introduction"), p("No recognizable methods heading here.")]),
          (2, [h(1, "Data"), p("A data section is not a methods section.")]),
          (3, [h(1, "Conclusion"), p("Closing summary.")])],
         1, 3, FALLBACK),
    _det("det012",
         [(1, [p("Unstructured report text without any headings.")]),
          (2, [p("More unstructured text.")])],
         1, 2, FALLBACK),
    _det("det013",
         _INTRO
         + [(2, [h(1, "Results"), p("Results presented before methods.")]),
            (3, [h(1, "Methods"), p("Methods arrive too late to trust.")]),
            (4, [p("Appendix.")])],
         1, 4, FALLBACK),
    _det("det014",
         _INTRO + _filler_pages([2])
         + [(3, [h(1, "Methods"), p("No results-family heading ever follows.")]),
            (4, [p("The paper just ends.")])],
         1, 4, FALLBACK),
    _det("det015",
         _INTRO
         + [(2, [h(1, "Methods"), p("First methods heading wins.")]),
            (3, [p("Interlude.")]),
            (4, [h(1, "Methods"), p("A repeated heading later on.")]),
            (5, [h(1, "Results"), p("Eventually, results.")])],
         2, 4, HEADING_MATCH),
    _det("det016",
         _INTRO
         + [(2, [h(1, "Methods"), p("Design and sample.")]),
            (3, [p("Procedure.")]), (4, [p("Measures.")]),
            (5, [h(1, "Discussion"), p("Discussion doubles as the closer.")])],
         2, 4, HEADING_MATCH),
    _det("det017",
         _INTRO
         + [(2, [h(1, "Methodology"), p("A long methods section begins.")])]
         + _filler_pages([3, 4, 5])
         + [(6, [h(1, "Results"), p("Findings at last.")]),
            (7, [p("References.")])],
         2, 5, HEADING_MATCH),
    _det("det018",
         _INTRO
         + [(2, [h(1, "methods"), p("Lowercase heading style.")]),
            (3, [h(1, "results"), p("Lowercase results heading.")])],
         2, 2, HEADING_MATCH),
    _det("det019",
         _INTRO
         + [(2, [h(1, "(3) Methods"), p("Parenthesized numbering style.")]),
            (3, [h(1, "Results"), p("Outcome summary.")])],
         2, 2, HEADING_MATCH),
    _det("det020",
         _INTRO
         + [(2, [h(1, "Analytic Approach"), p("Not a methods-family keyword.")]),
            (3, [h(1, "Results"), p("Findings.")])],
         1, 3, FALLBACK),
    _det("det021",
         _INTRO
         + [(2, [p("Methods used are described below, but only in body text.")]),
            (3, [h(1, "Results"), p("Findings.")])],
         1, 3, FALLBACK),
    _det("det022",
         _INTRO
         + [(2, [h(1, "Method"), p("Design."),
                 h(1, "Findings"), p("Same-page findings close the span.")]),
            (3, [p("Interlude.")]),
            (4, [h(1, "Results"), p("A later results heading changes nothing.")])],
         2, 2, HEADING_MATCH),
    _det("det023",
         _INTRO
         + [(2, [h(1, "Methods"), p("Sample and measures.")]),
            (3, [p("Procedure detail.")]),
            (4, [h(1, "Results"), p("Estimates.")]),
            (5, [p("Appendix tables.")])],
         2, 3, HEADING_MATCH),
    _det("det024",
         _INTRO
         + [(2, [h(1, "research design"), p("Lowercase keyword phrase.")]),
            (3, [p("Measures.")]),
            (4, [h(1, "DISCUSSION"), p("Uppercase closer.")])],
         2, 3, HEADING_MATCH),
    _det("det025",
         _INTRO
         + [(2, [h(1, "Empirical Strategy"), p("Identification and estimation.")]),
            (3, [h(1, "Results"), p("Estimates.")])],
         2, 2, HEADING_MATCH),
    _det("det026",
         _INTRO
         + [(2, [h(1, "Study Design and Procedures"), p("Protocol description.")]),
            (3, [h(1, "Findings"), p("Outcomes.")])],
         2, 2, HEADING_MATCH),
]
