"""Scoring of extracted instruments against gold annotations.

Entity matching is greedy one-to-one over dictionary-normalized names:
canonical equality pairs first, then fuzzy pairs in descending similarity,
ties broken toward the lexicographically smaller gold name. Rates follow
set-retrieval conventions; accuracy is TP/(TP+FP+FN), the set Jaccard
(critical success index). 0/0 ratios report 0 with an emptiness flag rather
than being dropped.

Relation fields (respondents/constructs/outcomes) are scored as soft overlap
(token Jaccard over normalized values) and flagged experimental: expert
labels and defensible model phrasings diverge lexically, so a hard
exact-match score would be misleading.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import IoFailure, MalformedInput, MismatchedCorpora
from .gateway import UsageStats
from .normalizer import (
    DEFAULT_FUZZY_THRESHOLD,
    CanonicalInstrument,
    InstrumentDictionary,
    key_variants,
    normalize_key,
    similarity,
)
from .relations import type_alias_map


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both rates are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def jaccard_accuracy_from_rates(precision: float, recall: float) -> float:
    """TP/(TP+FP+FN) expressed through the micro rates that imply the counts.

    With tp fixed to 1, fp = 1/precision - 1 and fn = 1/recall - 1, giving
    accuracy = 1 / (1/precision + 1/recall - 1).
    """
    if precision <= 0.0 or recall <= 0.0:
        return 0.0
    return 1.0 / (1.0 / precision + 1.0 / recall - 1.0)


@dataclass(frozen=True)
class Rates:
    precision: float
    recall: float
    f1: float
    accuracy: float
    empty: bool

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "f1": round(self.f1, 6),
            "accuracy": round(self.accuracy, 6),
            "empty": self.empty,
        }


def rates_from_counts(tp: int, fp: int, fn: int) -> Rates:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    accuracy = tp / (tp + fp + fn) if tp + fp + fn else 0.0
    return Rates(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        accuracy=accuracy,
        empty=(tp + fp + fn == 0),
    )


@dataclass(frozen=True)
class MatchResult:
    """One document's entity alignment."""

    pairs: tuple[tuple[str, str], ...]
    unmatched_predicted: tuple[str, ...]
    unmatched_gold: tuple[str, ...]

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_predicted)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gold)

    def rates(self) -> Rates:
        return rates_from_counts(self.tp, self.fp, self.fn)


def canonical_name_for(
    name: str, dictionary: InstrumentDictionary, collapse_subtests: bool = False
) -> str:
    """One name's canonical form: dictionary hit or normalized passthrough."""
    entry, _, _ = dictionary.lookup(name)
    if entry is None:
        return normalize_key(name)
    if collapse_subtests:
        entry = dictionary.root_of(entry)
    return entry.canonical_name


def match_score(name_a: str, name_b: str) -> float:
    """1.0 on any shared key variant, else primary-key edit similarity."""
    va = key_variants(name_a)
    vb = key_variants(name_b)
    if not va or not vb:
        return 0.0
    if va[0] == vb[0] or set(va) & set(vb):
        return 1.0
    return similarity(va[0], vb[0])


def _merged_predicted(
    predicted: Sequence[CanonicalInstrument | str],
    dictionary: InstrumentDictionary,
    collapse_subtests: bool,
) -> list[str]:
    """Predicted canonical names, collapse applied, duplicates merged."""
    out: list[str] = []
    seen: set[str] = set()
    for item in predicted:
        name = item if isinstance(item, str) else item.canonical_name
        canonical = canonical_name_for(name, dictionary, collapse_subtests)
        if canonical not in seen:
            seen.add(canonical)
            out.append(canonical)
    return out


def match_entities(
    predicted: Sequence[CanonicalInstrument | str],
    gold: Sequence[str],
    dictionary: InstrumentDictionary,
    collapse_subtests: bool = False,
    fuzzy_threshold: float = DEFAULT_FUZZY_THRESHOLD,
) -> MatchResult:
    """Greedy one-to-one alignment of predicted canonicals to gold names.

    Predicted names merge after normalization (the pipeline's view of the
    document); gold names keep one slot each, so an empty prediction always
    scores fn = len(gold).
    """
    pred_names = _merged_predicted(predicted, dictionary, collapse_subtests)
    gold_canon = [canonical_name_for(g, dictionary, collapse_subtests) for g in gold]

    candidates: list[tuple[float, str, int, int]] = []
    for i, pred in enumerate(pred_names):
        for j, gold_c in enumerate(gold_canon):
            score = match_score(pred, gold_c)
            if score >= 1.0 or score >= fuzzy_threshold:
                candidates.append((score, gold[j], i, j))
    # Descending score; equal scores resolved toward the smaller gold name.
    candidates.sort(key=lambda c: (-c[0], c[1], c[3], c[2]))

    used_pred: set[int] = set()
    used_gold: set[int] = set()
    pairs: list[tuple[str, str]] = []
    for score, _, i, j in candidates:
        if i in used_pred or j in used_gold:
            continue
        used_pred.add(i)
        used_gold.add(j)
        pairs.append((pred_names[i], gold[j]))
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_predicted=tuple(p for i, p in enumerate(pred_names) if i not in used_pred),
        unmatched_gold=tuple(g for j, g in enumerate(gold) if j not in used_gold),
    )


@dataclass(frozen=True)
class CoreMetrics:
    micro: Rates
    macro: Rates
    tp: int
    fp: int
    fn: int
    doc_count: int
    empty_doc_count: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "micro": self.micro.to_json_dict(),
            "macro": self.macro.to_json_dict(),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "doc_count": self.doc_count,
            "empty_doc_count": self.empty_doc_count,
        }


def compute_metrics(results: Sequence[MatchResult]) -> CoreMetrics:
    """Micro rates from summed counts; macro rates from per-doc averages."""
    tp = sum(r.tp for r in results)
    fp = sum(r.fp for r in results)
    fn = sum(r.fn for r in results)
    micro = rates_from_counts(tp, fp, fn)
    doc_rates = [r.rates() for r in results]
    n = len(doc_rates)
    if n:
        macro = Rates(
            precision=sum(r.precision for r in doc_rates) / n,
            recall=sum(r.recall for r in doc_rates) / n,
            f1=sum(r.f1 for r in doc_rates) / n,
            accuracy=sum(r.accuracy for r in doc_rates) / n,
            empty=all(r.empty for r in doc_rates),
        )
    else:
        macro = Rates(0.0, 0.0, 0.0, 0.0, True)
    return CoreMetrics(
        micro=micro,
        macro=macro,
        tp=tp,
        fp=fp,
        fn=fn,
        doc_count=n,
        empty_doc_count=sum(1 for r in doc_rates if r.empty),
    )


def error_profile(
    results: Mapping[str, MatchResult],
    gold_counts: Mapping[str, int],
    predicted_counts: Mapping[str, int],
    match_positions: Mapping[str, Sequence[int]] | None = None,
) -> dict[str, Any]:
    """Count-level failure signals: over-extraction and positional skew."""
    doc_ids = sorted(results)
    n = len(doc_ids)
    total_gold = sum(gold_counts.get(d, 0) for d in doc_ids)
    total_pred = sum(predicted_counts.get(d, 0) for d in doc_ids)
    single_docs = [d for d in doc_ids if gold_counts.get(d, 0) == 1]
    if single_docs:
        over_extraction = sum(predicted_counts.get(d, 0) for d in single_docs) / len(single_docs)
    else:
        over_extraction = None
    position_counts: dict[int, int] = {}
    if match_positions:
        for doc_id in doc_ids:
            for idx in match_positions.get(doc_id, ()):
                position_counts[idx] = position_counts.get(idx, 0) + 1
    positioned = sum(position_counts.values())
    return {
        "mean_gold_per_doc": (total_gold / n) if n else 0.0,
        "mean_predicted_per_doc": (total_pred / n) if n else 0.0,
        "single_gold_doc_count": len(single_docs),
        "over_extraction_factor": over_extraction,
        "match_position_counts": {str(k): position_counts[k] for k in sorted(position_counts)},
        "match_position_share_at_zero": (
            position_counts.get(0, 0) / positioned if positioned else None
        ),
    }


@dataclass(frozen=True)
class GoldInstrument:
    name: str
    type: str | None = None
    respondents: tuple[str, ...] | None = None
    constructs: tuple[str, ...] | None = None
    outcomes: tuple[str, ...] | None = None


def _opt_str_list(raw: Any, pointer: str) -> tuple[str, ...] | None:
    if raw is None:
        return None
    if not isinstance(raw, list) or any(not isinstance(v, str) for v in raw):
        raise MalformedInput("expected a list of strings", pointer)
    return tuple(raw)


def load_gold(path: str | Path) -> dict[str, list[GoldInstrument]]:
    """Gold file: JSON array of {doc_id, instruments: [{name, ...}]}."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read gold file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise MalformedInput("gold file must be a JSON array", "")
    gold: dict[str, list[GoldInstrument]] = {}
    for i, doc in enumerate(raw):
        pointer = f"/{i}"
        if not isinstance(doc, dict) or not isinstance(doc.get("doc_id"), str) or not doc["doc_id"]:
            raise MalformedInput("gold document needs a non-empty doc_id", pointer)
        doc_id = doc["doc_id"]
        if doc_id in gold:
            raise MalformedInput(f"duplicate doc_id {doc_id!r}", pointer + "/doc_id")
        instruments = doc.get("instruments")
        if not isinstance(instruments, list):
            raise MalformedInput("instruments must be a list", pointer + "/instruments")
        parsed: list[GoldInstrument] = []
        for k, item in enumerate(instruments):
            ipointer = f"{pointer}/instruments/{k}"
            if not isinstance(item, dict) or not isinstance(item.get("name"), str) or not item["name"]:
                raise MalformedInput("gold instrument needs a non-empty name", ipointer)
            gtype = item.get("type")
            if gtype is not None and not isinstance(gtype, str):
                raise MalformedInput("type must be a string", ipointer + "/type")
            parsed.append(
                GoldInstrument(
                    name=item["name"],
                    type=gtype,
                    respondents=_opt_str_list(item.get("respondents"), ipointer + "/respondents"),
                    constructs=_opt_str_list(item.get("constructs"), ipointer + "/constructs"),
                    outcomes=_opt_str_list(item.get("outcomes"), ipointer + "/outcomes"),
                )
            )
        gold[doc_id] = parsed
    return gold


def _token_set(values: Iterable[str]) -> set[str]:
    return {word for value in values for word in normalize_key(value).split()}


def _jaccard(a: set[str], b: set[str]) -> float | None:
    union = a | b
    if not union:
        return None
    return len(a & b) / len(union)


@dataclass
class EvalReport:
    """Everything one scoring run produced, serializable to one JSON file."""

    doc_ids: tuple[str, ...]
    results: dict[str, MatchResult]
    metrics: CoreMetrics
    profile: dict[str, Any]
    field_agreement: dict[str, Any]
    usage: UsageStats | None = None
    collapse_subtests: bool = False
    fuzzy_threshold: float = DEFAULT_FUZZY_THRESHOLD
    missing_prediction_docs: tuple[str, ...] = ()
    unscored_prediction_docs: tuple[str, ...] = ()

    def to_json_dict(self) -> dict[str, Any]:
        per_doc = []
        for doc_id in self.doc_ids:
            result = self.results[doc_id]
            entry = {"doc_id": doc_id, "tp": result.tp, "fp": result.fp, "fn": result.fn}
            entry.update(result.rates().to_json_dict())
            entry["pairs"] = [list(p) for p in result.pairs]
            entry["unmatched_predicted"] = list(result.unmatched_predicted)
            entry["unmatched_gold"] = list(result.unmatched_gold)
            per_doc.append(entry)
        return {
            "metrics": self.metrics.to_json_dict(),
            "error_profile": self.profile,
            "field_agreement": self.field_agreement,
            "usage": self.usage.to_json_dict() if self.usage else None,
            "settings": {
                "collapse_subtests": self.collapse_subtests,
                "fuzzy_threshold": self.fuzzy_threshold,
                "matching": "dictionary-normalized greedy one-to-one",
            },
            "missing_prediction_docs": list(self.missing_prediction_docs),
            "unscored_prediction_docs": list(self.unscored_prediction_docs),
            "per_doc": per_doc,
        }


def _field_agreement(
    pair_data: Sequence[tuple[Mapping[str, Any], GoldInstrument]],
) -> dict[str, Any]:
    agreement: dict[str, Any] = {"experimental": True}
    for fname in ("respondents", "constructs", "outcomes"):
        scores = []
        for pred, gold in pair_data:
            gold_values = getattr(gold, fname)
            if gold_values is None:
                continue
            pred_values = pred.get(fname) or []
            score = _jaccard(_token_set(pred_values), _token_set(gold_values))
            if score is not None:
                scores.append(score)
        agreement[fname] = {
            "mean_token_jaccard": (sum(scores) / len(scores)) if scores else None,
            "pairs_scored": len(scores),
        }
    type_hits = 0
    type_total = 0
    for pred, gold in pair_data:
        if gold.type is None:
            continue
        type_total += 1
        if type_alias_map(gold.type) == pred.get("type"):
            type_hits += 1
    agreement["type"] = {
        "match_rate": (type_hits / type_total) if type_total else None,
        "pairs_scored": type_total,
    }
    return agreement


def evaluate_corpus(
    predictions: Mapping[str, Sequence[Mapping[str, Any]]],
    gold: Mapping[str, Sequence[GoldInstrument]],
    dictionary: InstrumentDictionary,
    collapse_subtests: bool = False,
    fuzzy_threshold: float = DEFAULT_FUZZY_THRESHOLD,
    usage: UsageStats | None = None,
    match_positions: Mapping[str, Mapping[str, int]] | None = None,
) -> EvalReport:
    """Score per-document record payloads against gold annotations.

    Gold doc_ids absent from predictions score as all-missed; prediction
    doc_ids absent from gold are listed but not scored.
    """
    doc_ids = tuple(sorted(gold))
    results: dict[str, MatchResult] = {}
    gold_counts: dict[str, int] = {}
    predicted_counts: dict[str, int] = {}
    positions: dict[str, list[int]] = {}
    pair_data: list[tuple[Mapping[str, Any], GoldInstrument]] = []
    missing: list[str] = []

    for doc_id in doc_ids:
        gold_instruments = list(gold[doc_id])
        pred_instruments = list(predictions.get(doc_id, []))
        if doc_id not in predictions:
            missing.append(doc_id)
        pred_names = [str(p.get("name", "")) for p in pred_instruments]
        result = match_entities(
            [n for n in pred_names if n],
            [g.name for g in gold_instruments],
            dictionary,
            collapse_subtests=collapse_subtests,
            fuzzy_threshold=fuzzy_threshold,
        )
        results[doc_id] = result
        gold_counts[doc_id] = len(gold_instruments)
        predicted_counts[doc_id] = len(result.pairs) + len(result.unmatched_predicted)

        gold_by_name = {g.name: g for g in gold_instruments}
        pred_by_canonical: dict[str, Mapping[str, Any]] = {}
        for p, name in zip(pred_instruments, pred_names):
            canonical = canonical_name_for(name, dictionary, collapse_subtests)
            pred_by_canonical.setdefault(canonical, p)
        doc_positions = (match_positions or {}).get(doc_id, {})
        for pred_canonical, gold_name in result.pairs:
            pred_record = pred_by_canonical.get(pred_canonical)
            gold_instrument = gold_by_name.get(gold_name)
            if pred_record is not None and gold_instrument is not None:
                pair_data.append((pred_record, gold_instrument))
            if pred_canonical in doc_positions:
                positions.setdefault(doc_id, []).append(doc_positions[pred_canonical])

    metrics = compute_metrics([results[d] for d in doc_ids])
    profile = error_profile(results, gold_counts, predicted_counts, positions)
    return EvalReport(
        doc_ids=doc_ids,
        results=results,
        metrics=metrics,
        profile=profile,
        field_agreement=_field_agreement(pair_data),
        usage=usage,
        collapse_subtests=collapse_subtests,
        fuzzy_threshold=fuzzy_threshold,
        missing_prediction_docs=tuple(missing),
        unscored_prediction_docs=tuple(sorted(set(predictions) - set(gold))),
    )


def compare_configs(reports: Mapping[str, EvalReport]) -> dict[str, Any]:
    """Cross-configuration table; deltas are relative to the costliest run.

    token/time reductions are (baseline - config)/baseline, so the cheaper
    configuration shows the fraction saved. Requires identical doc_id sets.
    """
    if not reports:
        raise ValueError("compare_configs needs at least one report")
    labels = list(reports)
    base_ids = set(reports[labels[0]].doc_ids)
    for label in labels[1:]:
        ids = set(reports[label].doc_ids)
        if ids != base_ids:
            only_first = sorted(base_ids - ids)
            only_other = sorted(ids - base_ids)
            raise MismatchedCorpora(
                f"doc_id sets differ between {labels[0]!r} and {label!r}: "
                f"only in {labels[0]!r}: {only_first}; only in {label!r}: {only_other}"
            )

    def total_tokens(label: str) -> int | None:
        u = reports[label].usage
        return u.total_tokens if u else None

    deltas_possible = len(labels) > 1 and all(total_tokens(l) is not None for l in labels)
    baseline: str | None = None
    if deltas_possible:
        baseline = min(labels, key=lambda l: (-(total_tokens(l) or 0), l))
    rows = []
    for label in labels:
        report = reports[label]
        micro = report.metrics.micro
        row: dict[str, Any] = {
            "config": label,
            "accuracy": round(micro.accuracy, 6),
            "precision": round(micro.precision, 6),
            "recall": round(micro.recall, 6),
            "f1": round(micro.f1, 6),
        }
        if report.usage is not None:
            row["input_tokens"] = report.usage.input_tokens
            row["output_tokens"] = report.usage.output_tokens
            row["total_tokens"] = report.usage.total_tokens
            row["wall_time_ms"] = report.usage.wall_time_ms
        if baseline is not None:
            base_usage = reports[baseline].usage
            assert base_usage is not None
            row["token_reduction_vs_baseline"] = (
                (base_usage.total_tokens - report.usage.total_tokens) / base_usage.total_tokens
                if base_usage.total_tokens else None
            )
            row["wall_time_reduction_vs_baseline"] = (
                (base_usage.wall_time_ms - report.usage.wall_time_ms) / base_usage.wall_time_ms
                if base_usage.wall_time_ms else None
            )
        rows.append(row)
    return {"baseline": baseline, "rows": rows}


def _fmt_rate(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def render_report_table(report: EvalReport) -> str:
    """Text table with the standard four-column rate layout."""
    header = f"{'':<8}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1':>8}"
    lines = [header]
    for label, rates in (("micro", report.metrics.micro), ("macro", report.metrics.macro)):
        lines.append(
            f"{label:<8}{rates.accuracy:>10.3f}{rates.precision:>11.3f}"
            f"{rates.recall:>9.3f}{rates.f1:>8.3f}"
        )
    lines.append("")
    lines.append(
        f"docs={report.metrics.doc_count} tp={report.metrics.tp} "
        f"fp={report.metrics.fp} fn={report.metrics.fn} "
        f"empty_docs={report.metrics.empty_doc_count}"
    )
    if report.usage is not None:
        lines.append(
            f"tokens: input={report.usage.input_tokens} output={report.usage.output_tokens} "
            f"total={report.usage.total_tokens} wall_time_ms={report.usage.wall_time_ms}"
        )
    return "\n".join(lines) + "\n"


def render_comparison_table(comparison: Mapping[str, Any]) -> str:
    """One row per configuration, mirroring the ablation axis."""
    rows = comparison["rows"]
    width = max([len(r["config"]) for r in rows] + [6])
    header = (
        f"{'config':<{width}}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1':>8}"
        f"{'Tokens':>10}{'Saved':>8}"
    )
    lines = [header]
    for row in rows:
        saved = row.get("token_reduction_vs_baseline")
        tokens = row.get("total_tokens")
        lines.append(
            f"{row['config']:<{width}}{row['accuracy']:>10.3f}{row['precision']:>11.3f}"
            f"{row['recall']:>9.3f}{row['f1']:>8.3f}"
            f"{(str(tokens) if tokens is not None else '-'):>10}"
            f"{(f'{saved:.1%}' if saved is not None else '-'):>8}"
        )
    if comparison.get("baseline") is not None:
        lines.append("")
        lines.append(f"baseline (costliest) = {comparison['baseline']}")
    return "\n".join(lines) + "\n"
