"""CLI pipeline tests driven entirely by scripted transports."""
from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

import make_fixtures as mf
from attribeval.cli import main
from attribeval.recovery import AnnotationRecord
from attribeval.store import RunStore


@pytest.fixture(scope="module")
def golden_store(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("store")
    mf.run_golden_pipeline(root)
    return root


def copy_store(golden_store: Path, tmp_path: Path) -> Path:
    root = tmp_path / "store"
    shutil.copytree(golden_store, root)
    return root


def run_args(store: Path, command: str, *extra: str) -> list[str]:
    return [command, "--run", mf.GOLDEN_RUN, "--store", str(store), *extra]


def read_report(store: Path, name: str) -> str:
    return (store / mf.GOLDEN_RUN / "reports" / name).read_text(encoding="utf-8")


def inject_humans(store_root: Path, with_utility: bool = True) -> list[str]:
    """Write two human annotators' records over three scored tasks."""
    store = RunStore.open(store_root, mf.GOLDEN_RUN)
    picks = {
        "human:a1": {"c02:mask0": {1}, "c02:mask2": {2}, "c04:mask0": {1}},
        "human:a2": {"c02:mask0": {1}, "c02:mask2": {0, 2}, "c04:mask0": set()},
    }
    utilities = {"human:a1": [80.0, 55.0, 90.0], "human:a2": [40.0, 35.0, 60.0]}
    for annotator_id, answers in picks.items():
        records = [
            AnnotationRecord(
                task_id=task_id,
                annotator_id=annotator_id,
                annotator_kind="human",
                prediction=frozenset(prediction),
                utility=utilities[annotator_id][i] if with_utility else None,
                timestamp="2024-05-02T10:00:00+00:00",
            )
            for i, (task_id, prediction) in enumerate(sorted(answers.items()))
        ]
        store.replace_annotations(annotator_id, [r.to_dict() for r in records])
    return sorted(picks["human:a1"])


class TestPipeline:
    def test_reports_written(self, golden_store):
        reports = golden_store / mf.GOLDEN_RUN / "reports"
        for name in ("scores.json", "report.json", "report.csv"):
            assert (reports / name).is_file()

    def test_report_structure(self, golden_store):
        report = json.loads(read_report(golden_store, "report.json"))
        assert report["run_id"] == mf.GOLDEN_RUN
        assert report["setting"] == mf.GOLDEN_SETTING
        assert [g["annotator_id"] for g in report["groups"]] == [mf.ANNOTATOR]
        group = report["groups"][0]
        assert group["generator_id"] == mf.GENERATOR
        assert group["n_tasks"] == 18
        assert group["parse_failures"] == 1
        # automatic annotators never see control tasks
        assert not any(":pos" in t or ":neg" in t for t in group["per_task"])

    def test_csv_is_flat_table(self, golden_store):
        lines = read_report(golden_store, "report.csv").splitlines()
        assert lines[0] == "annotator,generator,evidence_source,metric,value"
        assert all(line.count(",") == 4 for line in lines[1:])

    def test_rerun_is_idempotent(self, golden_store, tmp_path):
        store = copy_store(golden_store, tmp_path)
        run_dir = store / mf.GOLDEN_RUN
        tracked = [
            p for p in sorted(run_dir.rglob("*"))
            if p.is_file() and p.name != "manifest.json"
        ]
        before = {p.relative_to(run_dir): p.read_bytes() for p in tracked}
        manifest_before = json.loads((run_dir / "manifest.json").read_text())
        mf.run_golden_pipeline(store)
        after = {p.relative_to(run_dir): p.read_bytes() for p in tracked}
        assert after == before
        manifest_after = json.loads((run_dir / "manifest.json").read_text())
        for volatile in ("created_at", "updated_at"):
            manifest_before.pop(volatile)
            manifest_after.pop(volatile)
        assert manifest_after == manifest_before

    def test_sample_setting_yields_one_task_per_claim(self, tmp_path, capsys):
        store = tmp_path / "store"
        argv = ["ingest", "--run", "sampled", "--store", str(store),
                "--corpus", str(mf.CORPUS_PATH), "--seed", str(mf.GOLDEN_SEED),
                "--setting", "sample", "--evidence", "machine", "--model", mf.GENERATOR]
        assert main(argv) == 0
        for command in ("generate", "mask"):
            extra = ["--replies", str(mf.REPLIES_DIR)] if command == "generate" else []
            assert main([command, "--run", "sampled", "--store", str(store), *extra]) == 0
        tasks = RunStore.open(store, "sampled").load("tasks")
        scored = [t for t in tasks if t["control_kind"] == "none"]
        claims = {t["claim_id"] for t in scored}
        assert len(scored) == len(claims) == 8


class TestErrorPaths:
    def test_unknown_run(self, tmp_path, capsys):
        assert main(["score", "--run", "absent", "--store", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_reingest_with_conflicting_config(self, golden_store, tmp_path, capsys):
        store = copy_store(golden_store, tmp_path)
        argv = run_args(store, "ingest", "--corpus", str(mf.CORPUS_PATH),
                        "--seed", "99", "--setting", mf.GOLDEN_SETTING,
                        "--evidence", "machine")
        assert main(argv) == 1
        assert "different config" in capsys.readouterr().err

    def test_reingest_with_same_config_refreshes(self, golden_store, tmp_path):
        store = copy_store(golden_store, tmp_path)
        argv = run_args(store, "ingest", "--corpus", str(mf.CORPUS_PATH),
                        "--seed", str(mf.GOLDEN_SEED), "--setting", mf.GOLDEN_SETTING,
                        "--evidence", "machine")
        assert main(argv) == 0

    def test_score_setting_assertion(self, golden_store, tmp_path, capsys):
        store = copy_store(golden_store, tmp_path)
        assert main(run_args(store, "score", "--setting", "sample")) == 1
        assert "cannot be rescored" in capsys.readouterr().err

    def test_bad_annotator_spec(self, golden_store, tmp_path, capsys):
        store = copy_store(golden_store, tmp_path)
        assert main(run_args(store, "annotate", "--annotator", "oracle")) == 1
        assert "llm:<model> or nli:<endpoint>" in capsys.readouterr().err

    def test_generate_needs_a_transport(self, golden_store, tmp_path, capsys):
        store = copy_store(golden_store, tmp_path)
        assert main(run_args(store, "generate")) == 1
        assert "--base-url" in capsys.readouterr().err

    def test_calibrate_without_utilities(self, golden_store, tmp_path, capsys):
        store = copy_store(golden_store, tmp_path)
        assert main(run_args(store, "calibrate")) == 1
        assert "nothing to calibrate" in capsys.readouterr().err

    def test_agree_needs_shared_tasks(self, golden_store, tmp_path, capsys):
        store = copy_store(golden_store, tmp_path)
        assert main(run_args(store, "agree", "--a", "human:union", "--b", mf.ANNOTATOR)) == 1
        assert "need at least 2" in capsys.readouterr().err


class TestHumanDerivedOutputs:
    def test_agree_between_union_and_llm(self, golden_store, tmp_path, capsys):
        store = copy_store(golden_store, tmp_path)
        inject_humans(store)
        assert main(run_args(store, "agree", "--a", "human:union", "--b", mf.ANNOTATOR)) == 0
        out = capsys.readouterr().out
        assert "alpha(human:union, llm:recovery-judge)" in out
        payload = json.loads(read_report(store, "agree_human_union_vs_llm_recovery-judge.json"))
        assert payload["n_units"] == 3
        assert -1.0 <= payload["alpha"] <= 1.0

    def test_agree_between_named_annotators(self, golden_store, tmp_path):
        store = copy_store(golden_store, tmp_path)
        inject_humans(store)
        assert main(run_args(store, "agree", "--a", "human:a1", "--b", "human:a2")) == 0
        payload = json.loads(read_report(store, "agree_human_a1_vs_human_a2.json"))
        assert payload["n_units"] == 3

    def test_calibrate_covers_rated_tasks(self, golden_store, tmp_path):
        store = copy_store(golden_store, tmp_path)
        rated = inject_humans(store)
        assert main(run_args(store, "calibrate")) == 0
        payload = json.loads(read_report(store, "calibration.json"))
        assert sorted(payload["items"]) == rated
        assert sorted(payload["annotators"]) == ["human:a1", "human:a2"]
        assert payload["converged"] is True
        assert payload["degenerate_annotators"] == []

    def test_report_gains_human_sections(self, golden_store, tmp_path):
        store = copy_store(golden_store, tmp_path)
        rated = inject_humans(store)
        assert main(run_args(store, "report")) == 0
        report = json.loads(read_report(store, "report.json"))
        assert -1.0 <= report["agreement_alpha"] <= 1.0
        assert sorted(report["entropy"]["per_task"]) == rated
        assert set(report["entropy"]["per_claim"]) == {"c02", "c04"}
        assert report["entropy"]["mean_bits"] * (2.0 ** 0.5) != 0  # present and numeric
        assert sorted(report["calibration"]["items"]) == rated
        annotators = {g["annotator_id"] for g in report["groups"]}
        assert annotators == {mf.ANNOTATOR, "human:a1", "human:a2"}
        csv_text = read_report(store, "report.csv")
        assert "human:pooled" in csv_text
        assert "agreement_alpha" in csv_text
        assert "calibrated_tau_mean" in csv_text

    def test_report_without_utilities_skips_calibration(self, golden_store, tmp_path):
        store = copy_store(golden_store, tmp_path)
        inject_humans(store, with_utility=False)
        assert main(run_args(store, "report")) == 0
        report = json.loads(read_report(store, "report.json"))
        assert report["calibration"] is None
        assert report["entropy"] is not None
