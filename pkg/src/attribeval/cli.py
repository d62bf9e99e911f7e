"""Command-line pipeline orchestration and report emission.

Nine subcommands drive one evaluation run through a filesystem store:
ingest a corpus, generate cited explanations, mask citations into recovery
tasks, annotate them automatically, score, measure agreement, calibrate
utilities, emit the consolidated report, and serve the human annotation
API.  Stages are decoupled through the store so slow human annotation and
fast automatic annotation can interleave on the same run.

Every stage rewrites its own outputs wholesale (never appends blindly), so
re-running a stage with the same inputs leaves identical bytes; wall-clock
timestamps exist only inside the run manifest.
"""
from __future__ import annotations

import argparse
import os
import random
import re
import sys
from concurrent.futures import ThreadPoolExecutor

from . import corpus as corpus_mod
from .calibrate import UtilityObservation, ep_calibrate, zscore_per_annotator
from .corpus import ClaimRecord, CorpusError, choose_gold_subset, corpus_stats, load_corpus
from .genpipe import (
    API_KEY_ENV,
    GenerationConfig,
    HttpChatTransport,
    ScriptedTransport,
    TransportError,
    select_evidence,
    generate_explanation,
)
from .metrics import (
    GroupReport,
    ScoreReport,
    annotation_entropy,
    krippendorff_alpha,
    recovery_option_counts,
    set_prf,
    standardize_prediction,
    union_annotations,
)
from .recovery import (
    AnnotationRecord,
    RecoveryTask,
    annotate_with_llm,
    annotate_with_nli,
    build_tasks,
    make_control_task,
    HttpEntailmentJudge,
)
from .store import RunManifest, RunStore, canonical_json
from .taskserver import TaskBoard, create_app

__all__ = ["main"]

# share of claims reserved for control tasks instead of scored tasks
CONTROL_CLAIM_FRACTION = 0.2


class CliError(Exception):
    """User-facing failure: printed to stderr, exit status 1."""


# ---- shared plumbing ----


def _open_store(args: argparse.Namespace) -> RunStore:
    try:
        return RunStore.open(args.store, args.run)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from exc


def _transport(args: argparse.Namespace):
    if getattr(args, "replies", None):
        return ScriptedTransport(args.replies)
    if not getattr(args, "base_url", None):
        raise CliError("a live run needs --base-url (or --replies for a scripted one)")
    if not os.environ.get(API_KEY_ENV):
        raise CliError(f"{API_KEY_ENV} is not set; required for live transports")
    return HttpChatTransport(args.base_url)


def _load_claims(store: RunStore) -> dict[str, ClaimRecord]:
    records = [ClaimRecord.from_dict(data) for data in store.load("claims")]
    if not records:
        raise CliError(f"run {store.manifest.run_id} has no ingested claims")
    return {record.id: record for record in records}


def _load_explanations(store: RunStore) -> list[corpus_mod.ExplanationRecord]:
    records = [corpus_mod.ExplanationRecord.from_dict(d) for d in store.load("explanations")]
    if not records:
        raise CliError("no explanations in store; run `generate` first")
    return records


def _load_tasks(store: RunStore) -> list[RecoveryTask]:
    tasks = [RecoveryTask.from_dict(d) for d in store.load("tasks")]
    if not tasks:
        raise CliError("no tasks in store; run `mask` first")
    return tasks


def _scored_tasks(store: RunStore) -> list[RecoveryTask]:
    return [t for t in _load_tasks(store) if t.control_kind == "none"]


def _annotations_by_annotator(store: RunStore) -> dict[str, list[AnnotationRecord]]:
    out: dict[str, list[AnnotationRecord]] = {}
    for annotator_id in store.annotator_ids():
        out[annotator_id] = [
            AnnotationRecord.from_dict(d) for d in store.load_annotations(annotator_id)
        ]
    return out


def _safe_report_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def _generator_id(store: RunStore) -> str:
    if store.manifest.generator_id:
        return store.manifest.generator_id
    explanations = store.load("explanations")
    ids = sorted({d["generator_id"] for d in explanations})
    return ids[0] if len(ids) == 1 else ",".join(ids) if ids else "unknown"


# ---- subcommands ----


def cmd_ingest(args: argparse.Namespace) -> int:
    claims = load_corpus(args.corpus)
    manifest = RunManifest(
        run_id=args.run,
        seed=args.seed,
        generator_id=args.model or "",
        setting=args.setting,
        evidence_source=args.evidence,
    )
    try:
        store = RunStore.create(args.store, manifest)
    except FileExistsError:
        store = RunStore.open(args.store, args.run)
        fixed = {
            "seed": (store.manifest.seed, manifest.seed),
            "setting": (store.manifest.setting, manifest.setting),
            "evidence_source": (store.manifest.evidence_source, manifest.evidence_source),
        }
        clashes = {k: v for k, v in fixed.items() if v[0] != v[1]}
        if clashes:
            raise CliError(
                f"run {args.run} already exists with different config: {clashes}"
            ) from None
    store.replace_all("claims", [c.to_dict() for c in claims])
    store.touch()
    stats = corpus_stats(claims)
    print(
        f"ingested {stats.n_claims} claims "
        f"({stats.mean_evidence_passages:.2f} evidence passages/claim) "
        f"into run {args.run}"
    )
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    store = _open_store(args)
    manifest = store.manifest
    claims = _load_claims(store)
    transport = _transport(args)
    model = args.model or manifest.generator_id
    if not model:
        raise CliError("no generator model: pass --model or set it at ingest")
    config = GenerationConfig(generator_id=model)

    def run_claim(claim: ClaimRecord) -> tuple[dict, dict]:
        if manifest.evidence_source == "machine":
            selection = select_evidence(
                claim.claim,
                claim.veracity,
                [(p.idx, p.text) for p in claim.evidence],
                transport,
                config,
            )
            selected = selection.indices
            selection_record = {"claim_id": claim.id, **selection.to_dict()}
        else:
            selected = choose_gold_subset(claim, manifest.seed)
            selection_record = {
                "claim_id": claim.id,
                "indices": sorted(selected),
                "raw_output": None,
            }
        explanation = generate_explanation(
            claim, selected, manifest.evidence_source, transport, config
        )
        return selection_record, explanation.to_dict()

    ordered = sorted(claims.values(), key=lambda c: c.id)
    with ThreadPoolExecutor(max_workers=max(1, args.parallel)) as pool:
        results = list(pool.map(run_claim, ordered))
    store.replace_all("selections", [sel for sel, _ in results])
    store.replace_all("explanations", [exp for _, exp in results])
    store.touch()
    print(f"generated {len(results)} explanations with {model}")
    return 0


def cmd_mask(args: argparse.Namespace) -> int:
    store = _open_store(args)
    manifest = store.manifest
    seed = args.seed if args.seed is not None else manifest.seed
    setting = args.setting or manifest.setting
    claims = _load_claims(store)
    explanations = _load_explanations(store)

    ids = [e.claim_id for e in explanations]
    rng = random.Random(f"{manifest.run_id}|{seed}|control-claims")
    n_controls = int(len(ids) * CONTROL_CLAIM_FRACTION)
    control_ids = set(rng.sample(sorted(ids), n_controls)) if n_controls else set()

    tasks: list[RecoveryTask] = []
    skipped = 0
    for explanation in explanations:
        claim = claims[explanation.claim_id]
        if explanation.claim_id in control_ids:
            for kind in ("positive", "negative"):
                try:
                    tasks.append(make_control_task(claim, explanation, kind, seed))
                except ValueError:
                    skipped += 1
        else:
            tasks.extend(build_tasks(claim, explanation, setting, seed))
    store.replace_all("tasks", [t.to_dict() for t in tasks])
    store.touch()
    scored = sum(1 for t in tasks if t.control_kind == "none")
    print(
        f"masked {scored} scored tasks and {len(tasks) - scored} controls "
        f"({setting} setting, seed {seed}"
        + (f", {skipped} controls not constructible)" if skipped else ")")
    )
    return 0


def _parse_annotator(spec: str) -> tuple[str, str]:
    kind, _, rest = spec.partition(":")
    if kind not in ("llm", "nli") or not rest:
        raise CliError(f"--annotator must be llm:<model> or nli:<endpoint>, got {spec!r}")
    return kind, rest


def cmd_annotate(args: argparse.Namespace) -> int:
    store = _open_store(args)
    kind, target = _parse_annotator(args.annotator)
    tasks = _scored_tasks(store)
    if kind == "llm":
        transport = _transport(args)
        config = GenerationConfig(generator_id=target)

        def solve(task: RecoveryTask) -> AnnotationRecord:
            return annotate_with_llm(task, transport, config, annotator_id=args.annotator)

    else:
        judge = HttpEntailmentJudge(target)

        def solve(task: RecoveryTask) -> AnnotationRecord:
            return annotate_with_nli(task, judge, annotator_id=args.annotator)

    with ThreadPoolExecutor(max_workers=max(1, args.parallel)) as pool:
        records = list(pool.map(solve, tasks))
    store.replace_annotations(args.annotator, [r.to_dict() for r in records])
    store.touch()
    failures = sum(r.parse_failed for r in records)
    print(
        f"annotated {len(records)} tasks as {args.annotator}"
        + (f" ({failures} parse failures)" if failures else "")
    )
    return 0


def _build_groups(store: RunStore, threshold: float, mode: str) -> list[GroupReport]:
    tasks = {t.task_id: t for t in _scored_tasks(store)}
    task_claims = {tid: t.claim_id for tid, t in tasks.items()}
    generator = _generator_id(store)
    source = store.manifest.evidence_source
    groups = []
    for annotator_id, records in sorted(_annotations_by_annotator(store).items()):
        task_scores = {}
        failures = 0
        for record in records:
            task = tasks.get(record.task_id)
            if task is None:
                continue
            task_scores[record.task_id] = set_prf(record.prediction, task.ground_truth)
            failures += record.parse_failed
        if not task_scores:
            continue
        groups.append(
            GroupReport.build(
                annotator_id=annotator_id,
                generator_id=generator,
                evidence_source=source,
                task_scores=task_scores,
                task_claims=task_claims,
                threshold=threshold,
                mode=mode,
                parse_failures=failures,
            )
        )
    return groups


def cmd_score(args: argparse.Namespace) -> int:
    store = _open_store(args)
    if args.setting and args.setting != store.manifest.setting:
        raise CliError(
            f"run {args.run} was created with setting {store.manifest.setting!r}; "
            f"it cannot be rescored as {args.setting!r}"
        )
    groups = _build_groups(store, args.threshold, args.mode)
    if not groups:
        raise CliError("no annotations to score; run `annotate` or `serve` first")
    payload = {
        "run_id": store.manifest.run_id,
        "threshold": args.threshold,
        "mode": args.mode,
        "groups": [g.to_dict() for g in groups],
    }
    path = store.write_report("scores.json", canonical_json(payload) + "\n")
    for group in groups:
        mean, std = group.summary["f1"]
        print(
            f"{group.annotator_id}: F1 {mean:.4f}±{std:.4f} "
            f"over {len(group.per_claim)} claims, "
            f"fully attributed {group.fully_attributed:.2f}"
        )
    print(f"wrote {path}")
    return 0


def _predictions_for_side(
    side: str,
    annotations: dict[str, list[AnnotationRecord]],
    tasks: dict[str, RecoveryTask],
) -> dict[str, frozenset[int]]:
    if side == "human:union":
        pooled: dict[str, list[frozenset[int]]] = {}
        for records in annotations.values():
            for record in records:
                if record.annotator_kind == "human" and record.task_id in tasks:
                    pooled.setdefault(record.task_id, []).append(record.prediction)
        return {tid: union_annotations(preds) for tid, preds in pooled.items()}
    if side not in annotations:
        raise CliError(f"no annotations from {side!r} in this run")
    return {
        record.task_id: record.prediction
        for record in annotations[side]
        if record.task_id in tasks
    }


def cmd_agree(args: argparse.Namespace) -> int:
    store = _open_store(args)
    tasks = {t.task_id: t for t in _scored_tasks(store)}
    annotations = _annotations_by_annotator(store)
    side_a = _predictions_for_side(args.a, annotations, tasks)
    side_b = _predictions_for_side(args.b, annotations, tasks)
    units = {}
    for task_id in sorted(set(side_a) & set(side_b)):
        truth = tasks[task_id].ground_truth
        units[task_id] = [
            standardize_prediction(side_a[task_id], truth),
            standardize_prediction(side_b[task_id], truth),
        ]
    if len(units) < 2:
        raise CliError(f"only {len(units)} tasks annotated by both sides; need at least 2")
    try:
        alpha = krippendorff_alpha(units)
    except ValueError as exc:
        raise CliError(f"agreement undefined: {exc}") from exc
    payload = {"a": args.a, "b": args.b, "alpha": alpha, "n_units": len(units)}
    name = f"agree_{_safe_report_name(args.a)}_vs_{_safe_report_name(args.b)}.json"
    path = store.write_report(name, canonical_json(payload) + "\n")
    print(f"alpha({args.a}, {args.b}) = {alpha:.4f} over {len(units)} tasks")
    print(f"wrote {path}")
    return 0


def _utility_observations(
    annotations: dict[str, list[AnnotationRecord]], tasks: dict[str, RecoveryTask]
) -> list[UtilityObservation]:
    observations = []
    for annotator_id in sorted(annotations):
        for record in sorted(annotations[annotator_id], key=lambda r: r.task_id):
            if (
                record.annotator_kind == "human"
                and record.utility is not None
                and record.task_id in tasks
            ):
                observations.append(
                    UtilityObservation(record.task_id, annotator_id, record.utility)
                )
    return observations


def _calibration_payload(
    annotations: dict[str, list[AnnotationRecord]], tasks: dict[str, RecoveryTask]
) -> dict | None:
    observations = _utility_observations(annotations, tasks)
    if not observations:
        return None
    standardized = zscore_per_annotator(observations)
    result = ep_calibrate(list(standardized.observations))
    return {
        "items": {k: list(v) for k, v in sorted(result.items.items())},
        "annotators": {k: list(v) for k, v in sorted(result.annotators.items())},
        "converged": result.converged,
        "iterations": result.iterations,
        "skipped_factors": result.skipped_factors,
        "degenerate_annotators": sorted(standardized.degenerate_annotators),
    }


def cmd_calibrate(args: argparse.Namespace) -> int:
    store = _open_store(args)
    tasks = {t.task_id: t for t in _scored_tasks(store)}
    payload = _calibration_payload(_annotations_by_annotator(store), tasks)
    if payload is None:
        raise CliError("no human utility ratings in this run; nothing to calibrate")
    path = store.write_report("calibration.json", canonical_json(payload) + "\n")
    n_items = len(payload["items"])
    state = "converged" if payload["converged"] else "did NOT converge"
    print(f"calibrated {n_items} items from {len(payload['annotators'])} annotators ({state})")
    print(f"wrote {path}")
    return 0


def _human_agreement_alpha(
    annotations: dict[str, list[AnnotationRecord]], tasks: dict[str, RecoveryTask]
) -> float | None:
    units: dict[str, list[frozenset[int]]] = {}
    for records in annotations.values():
        for record in records:
            if record.annotator_kind == "human" and record.task_id in tasks:
                units.setdefault(record.task_id, []).append(record.prediction)
    pairable = {tid: labels for tid, labels in units.items() if len(labels) >= 2}
    if len(pairable) < 2:
        return None
    try:
        return krippendorff_alpha(pairable)
    except ValueError:
        return None


def _entropy_maps(
    annotations: dict[str, list[AnnotationRecord]], tasks: dict[str, RecoveryTask]
) -> tuple[dict[str, float], dict[str, float]]:
    by_task: dict[str, list[frozenset[int]]] = {}
    for records in annotations.values():
        for record in records:
            if record.annotator_kind == "human" and record.task_id in tasks:
                by_task.setdefault(record.task_id, []).append(record.prediction)
    per_task = {
        tid: annotation_entropy(
            recovery_option_counts(preds, len(tasks[tid].presented_sentences))
        )
        for tid, preds in sorted(by_task.items())
    }
    by_claim: dict[str, list[float]] = {}
    for tid, value in per_task.items():
        by_claim.setdefault(tasks[tid].claim_id, []).append(value)
    per_claim = {cid: sum(vs) / len(vs) for cid, vs in sorted(by_claim.items())}
    return per_task, per_claim


def cmd_report(args: argparse.Namespace) -> int:
    store = _open_store(args)
    manifest = store.manifest
    tasks = {t.task_id: t for t in _scored_tasks(store)}
    annotations = _annotations_by_annotator(store)
    groups = _build_groups(store, args.threshold, args.mode)
    if not groups:
        raise CliError("no annotations to report on")
    per_task_entropy, per_claim_entropy = _entropy_maps(annotations, tasks)
    report = ScoreReport(
        run_id=manifest.run_id,
        seed=manifest.seed,
        setting=manifest.setting,
        evidence_source=manifest.evidence_source,
        threshold=args.threshold,
        mode=args.mode,
        groups=tuple(groups),
        agreement_alpha=_human_agreement_alpha(annotations, tasks),
        entropy_per_task=per_task_entropy or None,
        entropy_per_claim=per_claim_entropy or None,
        calibration=_calibration_payload(annotations, tasks),
    )
    json_path = store.write_report("report.json", canonical_json(report.to_dict()) + "\n")
    csv_path = store.write_report("report.csv", report.to_csv())
    print(f"wrote {json_path}")
    print(f"wrote {csv_path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    store = _open_store(args)
    claims = _load_claims(store)
    tasks = _load_tasks(store)
    board = TaskBoard(
        tasks,
        claims,
        store=store,
        coverage_target=args.coverage,
        control_every=args.control_every,
        accuracy_cutoff=args.cutoff,
        min_controls=args.min_controls,
    )
    ui_dir = args.ui if args.ui and os.path.isdir(args.ui) else None
    if args.ui and ui_dir is None:
        raise CliError(f"--ui directory not found: {args.ui}")
    app = create_app(board, ui_dir=ui_dir)
    import uvicorn

    print(f"serving run {args.run} on http://{args.host}:{args.serve_port}")
    uvicorn.run(app, host=args.host, port=args.serve_port, log_level="warning")
    return 0


# ---- parser ----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attribeval",
        description="generate cited fact-checking explanations and evaluate their attribution",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--run", required=True, help="run id")
        p.add_argument("--store", default="runs", help="store root directory (default: runs)")

    p = sub.add_parser("ingest", help="load a claim corpus into a new run")
    add_common(p)
    p.add_argument("--corpus", required=True, help="corpus JSONL file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--setting", choices=("sample", "full"), default="sample")
    p.add_argument("--evidence", choices=("human", "machine"), default="machine")
    p.add_argument("--model", help="generator model id recorded in the manifest")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("generate", help="select evidence and generate explanations")
    add_common(p)
    p.add_argument("--model", help="generator model id (defaults to the manifest)")
    p.add_argument("--base-url", help="chat completion endpoint")
    p.add_argument("--replies", help="scripted reply directory instead of a live endpoint")
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("mask", help="turn explanations into recovery tasks")
    add_common(p)
    p.add_argument("--seed", type=int, help="override the manifest seed")
    p.add_argument("--setting", choices=("sample", "full"), help="override the manifest setting")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("annotate", help="solve recovery tasks with an automatic annotator")
    add_common(p)
    p.add_argument("--annotator", required=True, help="llm:<model> or nli:<endpoint>")
    p.add_argument("--base-url", help="chat completion endpoint for llm annotators")
    p.add_argument("--replies", help="scripted reply directory instead of a live endpoint")
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("score", help="score annotations against hidden ground truth")
    add_common(p)
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--mode", choices=("all", "mean"), default="all")
    p.add_argument("--setting", choices=("sample", "full"),
                   help="assert the run's setting; errors on mismatch")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("agree", help="agreement between two annotation sources")
    add_common(p)
    p.add_argument("--a", required=True, help="llm:<id>, nli:<id>, human:<id> or human:union")
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("calibrate", help="calibrate human utility ratings")
    add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="emit the consolidated report (JSON + CSV)")
    add_common(p)
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--mode", choices=("all", "mean"), default="all")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve tasks to human annotators over HTTP")
    add_common(p)
    p.add_argument("--serve-port", type=int, default=8340)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", help="static UI bundle directory")
    p.add_argument("--coverage", type=int, default=5, help="annotations per task")
    p.add_argument("--control-every", type=int, default=5)
    p.add_argument("--cutoff", type=float, default=0.7)
    p.add_argument("--min-controls", type=int, default=3)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, TransportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
