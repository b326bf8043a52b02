"""Command-line surface: extract, evaluate, ablate, record, validate-dict, detect.

Exit codes: 0 success, 2 configuration/input-format error, 3 document
ingestion error (some documents skipped), 4 fatal backend error (transcript
miss or transport failure after retries).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

from .chain import (
    STEP_DECISION,
    STEP_EXTRACTION,
    STEP_SUMMARIZATION,
    ChainConfig,
    load_template_set,
    run_chain,
)
from .config import (
    MODE_RECORD,
    RunConfig,
    build_gateway,
    config_digest,
    load_run_config,
    resolved_config_dict,
)
from .doc_model import load_document
from .errors import (
    BackendUnavailable,
    ConfigError,
    IoFailure,
    MalformedInput,
    MismatchedCorpora,
    TranscriptMiss,
)
from .evaluator import (
    EvalReport,
    canonical_name_for,
    compare_configs,
    evaluate_corpus,
    load_gold,
    render_comparison_table,
    render_report_table,
)
from .gateway import UsageStats
from .normalizer import InstrumentDictionary, load_dictionary, normalize, validate_dictionary
from .relations import (
    STEP_RELATION,
    document_output,
    extract_relations,
    parse_record_output,
)
from .section_detector import detect_method_span

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGESTION = 3
EXIT_BACKEND = 4

_SETUP_ERRORS = (ConfigError, IoFailure, MalformedInput)

log = logging.getLogger(__name__)


def _fail(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# ---------------------------------------------------------------- extract --


def _process_document(cfg, doc, gateway, dictionary, templates, out_dir: Path) -> dict[str, Any]:
    """Full pipeline for one parsed document; writes records and trace."""
    mentions, trace, usage = run_chain(doc, cfg.chain, cfg.chunker, gateway, templates)
    anchors = normalize(mentions, dictionary, cfg.collapse_subtests, cfg.fuzzy_threshold)
    if anchors:
        records, rel_entries, rel_usage = extract_relations(
            anchors, trace.chunks, gateway, doc.doc_id, template=templates[STEP_RELATION]
        )
        trace.entries.extend(rel_entries)
        usage.add(rel_usage)
    else:
        records = []
    _write_json(out_dir / f"{doc.doc_id}.records.json", document_output(doc.doc_id, records))
    _write_lines(out_dir / f"{doc.doc_id}.trace.jsonl", trace.to_json_lines())
    degraded = trace.degraded or any(r.degraded for r in records)
    return {"doc_id": doc.doc_id, "status": "ok", "degraded": degraded}


def _run_extract(cfg: RunConfig) -> int:
    """Core of extract/record/ablate cells. Returns an exit code."""
    try:
        dictionary = load_dictionary(cfg.dictionary_path)
        templates = load_template_set(
            cfg.chain.prompt_template_set,
            names=(STEP_EXTRACTION, STEP_SUMMARIZATION, STEP_DECISION, STEP_RELATION),
        )
        gateway, recorder = build_gateway(cfg)
        input_dir = Path(cfg.input_dir)
        if not input_dir.is_dir():
            raise ConfigError(f"input_dir {input_dir} is not a directory")
        doc_paths = sorted(input_dir.glob("*.json"))
        if not doc_paths:
            raise ConfigError(f"no *.json documents found in {input_dir}")
    except _SETUP_ERRORS as exc:
        _fail(str(exc))
        return EXIT_CONFIG

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    # Ingestion pass: parse every document up front so duplicate ids and
    # malformed files surface deterministically, in input order.
    statuses: list[dict[str, Any]] = []
    docs = []
    seen_ids: set[str] = set()
    ingestion_failed = False
    for path in doc_paths:
        try:
            doc = load_document(path)
            if doc.doc_id in seen_ids:
                raise MalformedInput(f"duplicate doc_id {doc.doc_id!r} (also in an earlier file)")
            seen_ids.add(doc.doc_id)
        except (MalformedInput, IoFailure) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            statuses.append(
                {"source": path.name, "doc_id": None, "status": "ingestion_error", "error": str(exc)}
            )
            ingestion_failed = True
            if cfg.fail_fast:
                break
            continue
        docs.append((path, doc))
        statuses.append({"source": path.name, "doc_id": doc.doc_id, "status": "pending"})

    status_by_source = {s["source"]: s for s in statuses}
    fatal: Exception | None = None

    if not (cfg.fail_fast and ingestion_failed):
        def run_one(item):
            path, doc = item
            return _process_document(cfg, doc, gateway, dictionary, templates, out_dir)

        outcomes: list[tuple[Path, Any]] = []
        if cfg.concurrency > 1 and len(docs) > 1:
            with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
                futures = [(path, pool.submit(run_one, (path, doc))) for path, doc in docs]
                for path, future in futures:
                    try:
                        outcomes.append((path, future.result()))
                    except Exception as exc:  # noqa: BLE001 - classified below
                        outcomes.append((path, exc))
        else:
            for path, doc in docs:
                try:
                    outcomes.append((path, run_one((path, doc))))
                except Exception as exc:  # noqa: BLE001 - classified below
                    outcomes.append((path, exc))
                    if isinstance(exc, (TranscriptMiss, BackendUnavailable)) or cfg.fail_fast:
                        break

        for path, outcome in outcomes:
            entry = status_by_source[path.name]
            if isinstance(outcome, dict):
                entry.update(outcome)
            elif isinstance(outcome, (TranscriptMiss, BackendUnavailable)):
                entry.update({"status": "backend_error", "error": str(outcome)})
                if fatal is None:
                    fatal = outcome
            else:
                raise outcome

    for entry in statuses:
        if entry["status"] == "pending":  # aborted before this document ran
            entry["status"] = "skipped"
    resolved = resolved_config_dict(cfg)
    manifest = {
        "config": resolved,
        "config_digest": config_digest(resolved),
        "dictionary_version": dictionary.version,
        "template_set": cfg.chain.prompt_template_set,
        "documents": statuses,
        "usage_total": gateway.usage_total.to_json_dict(),
    }
    _write_json(out_dir / "manifest.json", manifest)

    if fatal is not None:
        _fail(str(fatal))
        return EXIT_BACKEND
    if recorder is not None and cfg.backend.transcript:
        recorder.write_transcript(cfg.backend.transcript)
        print(f"transcript written to {cfg.backend.transcript}")
    ok = sum(1 for s in statuses if s["status"] == "ok")
    print(f"processed {ok}/{len(doc_paths)} documents -> {out_dir}")
    if ingestion_failed:
        return EXIT_INGESTION
    return EXIT_OK


_OVERRIDE_KEYS = (
    "input_dir", "dictionary", "output_dir", "transcript", "transcript_out",
    "steps", "input_mode", "template_set", "chunk_budget", "overlap",
    "collapse_subtests", "fuzzy_threshold", "concurrency", "seed", "fail_fast",
)


def _overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    return {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}


def cmd_extract(args: argparse.Namespace) -> int:
    try:
        cfg = load_run_config(args.config, _overrides_from_args(args))
    except ConfigError as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    return _run_extract(cfg)


def cmd_record(args: argparse.Namespace) -> int:
    try:
        cfg = load_run_config(args.config, _overrides_from_args(args))
        if cfg.backend.mode != MODE_RECORD:
            raise ConfigError(
                "record requires backend.mode 'record' (set backend.transcript as the "
                "capture target, or pass --transcript-out)"
            )
    except ConfigError as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    return _run_extract(cfg)


# --------------------------------------------------------------- evaluate --


def _load_predictions(pred_dir: Path) -> dict[str, list[dict[str, Any]]]:
    predictions: dict[str, list[dict[str, Any]]] = {}
    for path in sorted(pred_dir.glob("*.records.json")):
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"invalid JSON in {path}: {exc}") from exc
        doc_id, instruments = parse_record_output(raw)
        if doc_id in predictions:
            raise MalformedInput(f"duplicate doc_id {doc_id!r} in {path.name}")
        predictions[doc_id] = instruments
    return predictions


def _usage_from_manifest(manifest_path: Path) -> UsageStats | None:
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
        totals = raw["usage_total"]
        return UsageStats(
            input_tokens=int(totals["input_tokens"]),
            output_tokens=int(totals["output_tokens"]),
            wall_time_ms=int(totals["wall_time_ms"]),
            backend_name=str(totals.get("backend_name", "")),
            requests=int(totals.get("requests", 0)),
            retries=int(totals.get("retries", 0)),
            repairs=int(totals.get("repairs", 0)),
        )
    except (OSError, ValueError, KeyError, TypeError):
        return None


def _positions_from_traces(
    pred_dir: Path, dictionary: InstrumentDictionary, collapse_subtests: bool
) -> dict[str, dict[str, int]]:
    """First-mention chunk index per canonical name, from trace tails."""
    positions: dict[str, dict[str, int]] = {}
    for path in sorted(pred_dir.glob("*.trace.jsonl")):
        doc_id = path.name[: -len(".trace.jsonl")]
        try:
            lines = [l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
            tail = json.loads(lines[-1]) if lines else {}
        except (OSError, json.JSONDecodeError):
            continue
        doc_positions: dict[str, int] = {}
        for mention in tail.get("final_mentions", []):
            name = mention.get("name")
            index = mention.get("chunk_index")
            if isinstance(name, str) and isinstance(index, int):
                canonical = canonical_name_for(name, dictionary, collapse_subtests)
                doc_positions.setdefault(canonical, index)
        if doc_positions:
            positions[doc_id] = doc_positions
    return positions


def _evaluate_dir(
    pred_dir: Path,
    gold_path: Path,
    dictionary: InstrumentDictionary,
    collapse_subtests: bool,
    fuzzy_threshold: float,
) -> EvalReport:
    predictions = _load_predictions(pred_dir)
    gold = load_gold(gold_path)
    usage = _usage_from_manifest(pred_dir / "manifest.json")
    positions = _positions_from_traces(pred_dir, dictionary, collapse_subtests)
    return evaluate_corpus(
        predictions,
        gold,
        dictionary,
        collapse_subtests=collapse_subtests,
        fuzzy_threshold=fuzzy_threshold,
        usage=usage,
        match_positions=positions,
    )


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        dictionary = load_dictionary(args.dictionary)
        pred_dir = Path(args.predictions)
        if not pred_dir.is_dir():
            raise ConfigError(f"predictions directory {pred_dir} does not exist")
        report = _evaluate_dir(
            pred_dir, Path(args.gold), dictionary, args.collapse_subtests, args.fuzzy_threshold
        )
    except _SETUP_ERRORS as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    out_dir = Path(args.output) if args.output else pred_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "eval_report.json", report.to_json_dict())
    table = render_report_table(report)
    (out_dir / "eval_report.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


# ----------------------------------------------------------------- ablate --

_STEP_ABBREV = {STEP_EXTRACTION: "Ex", STEP_SUMMARIZATION: "Sum", STEP_DECISION: "Dec"}


def _cell_label(steps: tuple[str, ...], input_mode: str) -> str:
    return "+".join(_STEP_ABBREV[s] for s in steps) + "_" + input_mode


def _safe_dir_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "+-_." else "_" for c in label)


def _parse_grid(path: Path) -> list[dict[str, Any]]:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read grid file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in grid file {path}: {exc}") from exc
    cells = raw.get("cells") if isinstance(raw, dict) else raw
    if not isinstance(cells, list) or not cells:
        raise ConfigError(f"grid file {path} must contain a non-empty 'cells' list")
    return cells


def cmd_ablate(args: argparse.Namespace) -> int:
    try:
        base = load_run_config(args.config, _overrides_from_args(args))
        dictionary = load_dictionary(base.dictionary_path)
        cells = _parse_grid(Path(args.grid))
        runs: list[tuple[str, RunConfig]] = []
        labels: set[str] = set()
        base_out = Path(base.output_dir)
        for i, cell in enumerate(cells):
            if not isinstance(cell, dict):
                raise ConfigError(f"grid cell {i} must be an object")
            steps = cell.get("steps", list(base.chain.steps))
            if isinstance(steps, str):
                steps = [s.strip() for s in steps.split(",") if s.strip()]
            chain = ChainConfig(
                steps=tuple(steps),
                input_mode=cell.get("input_mode", base.chain.input_mode),
                prompt_template_set=base.chain.prompt_template_set,
            )
            label = cell.get("label") or _cell_label(chain.steps, chain.input_mode)
            if label in labels:
                raise ConfigError(f"duplicate grid label {label!r}")
            labels.add(label)
            cfg = dataclasses.replace(
                base, chain=chain, output_dir=str(base_out / _safe_dir_name(label))
            )
            runs.append((label, cfg))
    except _SETUP_ERRORS as exc:
        _fail(str(exc))
        return EXIT_CONFIG

    reports: dict[str, EvalReport] = {}
    for label, cfg in runs:
        code = _run_extract(cfg)
        if code != EXIT_OK:
            _fail(f"grid cell {label!r} failed with exit code {code}")
            return code
        try:
            report = _evaluate_dir(
                Path(cfg.output_dir), Path(args.gold), dictionary,
                cfg.collapse_subtests, cfg.fuzzy_threshold,
            )
        except _SETUP_ERRORS as exc:
            _fail(f"evaluating grid cell {label!r}: {exc}")
            return EXIT_CONFIG
        _write_json(Path(cfg.output_dir) / "eval_report.json", report.to_json_dict())
        (Path(cfg.output_dir) / "eval_report.txt").write_text(
            render_report_table(report), encoding="utf-8"
        )
        reports[label] = report

    try:
        comparison = compare_configs(reports)
    except MismatchedCorpora as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    base_out = Path(runs[0][1].output_dir).parent
    base_out.mkdir(parents=True, exist_ok=True)
    _write_json(base_out / "comparison.json", comparison)
    table = render_comparison_table(comparison)
    (base_out / "comparison.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


# ------------------------------------------------------- validate-dict ----


def cmd_validate_dict(args: argparse.Namespace) -> int:
    path = Path(args.dictionary_path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        _fail(f"cannot read dictionary file {path}: {exc}")
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        _fail(f"invalid JSON in {path}: {exc}")
        return EXIT_CONFIG
    problems = validate_dictionary(raw)
    if problems:
        for pointer, message in problems:
            print(f"{pointer or '/'}: {message}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"dictionary OK: version {raw['version']}, {len(raw['entries'])} entries")
    return EXIT_OK


# ----------------------------------------------------------------- detect --


def cmd_detect(args: argparse.Namespace) -> int:
    input_dir = Path(args.input_dir)
    if not input_dir.is_dir():
        _fail(f"input_dir {input_dir} is not a directory")
        return EXIT_CONFIG
    lines = []
    failures = 0
    for path in sorted(input_dir.glob("*.json")):
        try:
            doc = load_document(path)
        except (MalformedInput, IoFailure) as exc:
            _fail(f"{path.name}: {exc}")
            failures += 1
            continue
        span = detect_method_span(doc)
        lines.append(
            json.dumps(
                {
                    "doc_id": doc.doc_id,
                    "start_page": span.start_page,
                    "end_page": span.end_page,
                    "mode": span.detection_mode,
                    "matched_heading": span.matched_heading,
                },
                ensure_ascii=False,
            )
        )
    if args.output:
        _write_lines(Path(args.output), lines)
    else:
        for line in lines:
            print(line)
    return EXIT_INGESTION if failures else EXIT_OK


# ------------------------------------------------------------------- main --


def _add_run_flags(sp: argparse.ArgumentParser, transcript_out: bool = False) -> None:
    sp.add_argument("--config", help="JSON run configuration file")
    sp.add_argument("--input-dir", dest="input_dir", help="directory of parsed-document JSON files")
    sp.add_argument("--dictionary", help="instrument dictionary JSON file")
    sp.add_argument("--output-dir", dest="output_dir", help="where records/traces/manifest go")
    if transcript_out:
        sp.add_argument("--transcript-out", dest="transcript_out",
                        help="capture a replayable transcript to this path (record mode)")
    else:
        sp.add_argument("--transcript", help="mock transcript to replay (forces mock mode)")
    sp.add_argument("--steps", help="comma-separated subset of extraction,summarization,decision")
    sp.add_argument("--input-mode", dest="input_mode", choices=("method_excerpt", "full_text"))
    sp.add_argument("--template-set", dest="template_set", help="template directory or packaged set name")
    sp.add_argument("--chunk-budget", dest="chunk_budget", type=int)
    sp.add_argument("--overlap", type=int)
    sp.add_argument("--collapse-subtests", dest="collapse_subtests",
                    action="store_const", const=True, default=None,
                    help="collapse sub-tests into their parent battery")
    sp.add_argument("--fuzzy-threshold", dest="fuzzy_threshold", type=float)
    sp.add_argument("--concurrency", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--fail-fast", dest="fail_fast", action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="instrument-extractor",
        description="Extract, normalize, and evaluate research-instrument information "
                    "from parsed papers.",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("extract", help="run the full pipeline over a corpus")
    _add_run_flags(sp)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("record", help="run live and capture a replayable transcript")
    _add_run_flags(sp, transcript_out=True)
    sp.set_defaults(func=cmd_record)

    sp = sub.add_parser("evaluate", help="score prediction records against gold annotations")
    sp.add_argument("--predictions", required=True, help="directory of *.records.json files")
    sp.add_argument("--gold", required=True, help="gold annotation JSON file")
    sp.add_argument("--dictionary", required=True, help="instrument dictionary JSON file")
    sp.add_argument("--output", help="report directory (defaults to the predictions directory)")
    sp.add_argument("--collapse-subtests", dest="collapse_subtests", action="store_true")
    sp.add_argument("--fuzzy-threshold", dest="fuzzy_threshold", type=float, default=0.90)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ablate", help="run a config grid and compare the results")
    _add_run_flags(sp)
    sp.add_argument("--grid", required=True, help="JSON file with a 'cells' list of chain configs")
    sp.add_argument("--gold", required=True, help="gold annotation JSON file")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("validate-dict", help="check a dictionary file against its invariants")
    sp.add_argument("dictionary_path")
    sp.set_defaults(func=cmd_validate_dict)

    sp = sub.add_parser("detect", help="emit detected methods-section spans per document")
    sp.add_argument("--input-dir", dest="input_dir", required=True)
    sp.add_argument("--output", help="write JSON lines here instead of stdout")
    sp.set_defaults(func=cmd_detect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _SETUP_ERRORS as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    except (TranscriptMiss, BackendUnavailable) as exc:
        _fail(str(exc))
        return EXIT_BACKEND


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
