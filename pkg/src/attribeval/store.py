"""On-disk layout for evaluation runs.

A run is a directory holding a manifest plus JSON-lines record files:

    <root>/<run_id>/manifest.json
    <root>/<run_id>/claims.jsonl
    <root>/<run_id>/selections.jsonl
    <root>/<run_id>/explanations.jsonl
    <root>/<run_id>/tasks.jsonl
    <root>/<run_id>/annotations/<annotator>.jsonl
    <root>/<run_id>/reports/...

Records are serialized canonically (sorted keys, fixed separators) so that
reading a run and writing it back is byte identical.  Wall-clock timestamps
live only in the manifest; record files stay deterministic.
"""
from __future__ import annotations

import datetime as _dt
import json
import re
import threading
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

__all__ = ["RunManifest", "RunStore", "canonical_json"]

RECORD_KINDS = ("claims", "selections", "explanations", "tasks")


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _safe_name(name: str) -> str:
    return re.sub(r"[^\w.-]+", "_", name)


@dataclass
class RunManifest:
    """Identity and configuration of one evaluation run."""

    run_id: str
    seed: int
    generator_id: str = ""
    annotator_id: str = ""
    setting: str = "sample"
    evidence_source: str = "machine"
    created_at: str = ""
    updated_at: str = ""

    def __post_init__(self) -> None:
        if self.setting not in ("sample", "full"):
            raise ValueError(f"setting must be 'sample' or 'full', got {self.setting!r}")
        if self.evidence_source not in ("human", "machine"):
            raise ValueError(
                f"evidence_source must be 'human' or 'machine', got {self.evidence_source!r}"
            )
        if not self.run_id:
            raise ValueError("run_id must be non-empty")

    def to_dict(self) -> dict:
        return asdict(self)


class RunStore:
    """Filesystem store for one run's records, reports and manifest.

    Appends are serialized through an in-process lock and flushed per
    record; a run expects a single writing process at a time.
    """

    def __init__(self, run_dir: Path, manifest: RunManifest):
        self.run_dir = Path(run_dir)
        self.manifest = manifest
        self._lock = threading.Lock()

    # ---- lifecycle ----

    @classmethod
    def create(cls, root: str | Path, manifest: RunManifest) -> "RunStore":
        run_dir = Path(root) / manifest.run_id
        if run_dir.exists():
            raise FileExistsError(f"run directory already exists: {run_dir}")
        run_dir.mkdir(parents=True)
        (run_dir / "annotations").mkdir()
        (run_dir / "reports").mkdir()
        manifest.created_at = manifest.created_at or _now()
        manifest.updated_at = manifest.created_at
        store = cls(run_dir, manifest)
        store._write_manifest()
        return store

    @classmethod
    def open(cls, root: str | Path, run_id: str) -> "RunStore":
        run_dir = Path(root) / run_id
        manifest_path = run_dir / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no manifest at {manifest_path}")
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        return cls(run_dir, RunManifest(**data))

    def _write_manifest(self) -> None:
        path = self.run_dir / "manifest.json"
        path.write_text(
            json.dumps(self.manifest.to_dict(), sort_keys=True, indent=2, ensure_ascii=False)
            + "\n",
            encoding="utf-8",
        )

    def touch(self) -> None:
        self.manifest.updated_at = _now()
        self._write_manifest()

    # ---- record files ----

    def _path_for(self, kind: str) -> Path:
        if kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        return self.run_dir / f"{kind}.jsonl"

    def append(self, kind: str, record: dict) -> None:
        path = self._path_for(kind)
        with self._lock:
            with path.open("a", encoding="utf-8") as handle:
                handle.write(canonical_json(record) + "\n")
                handle.flush()

    def replace_all(self, kind: str, records: Iterable[dict]) -> None:
        """Atomically rewrite a record file; used by rerunnable stages."""
        path = self._path_for(kind)
        tmp = path.with_suffix(".jsonl.tmp")
        with self._lock:
            with tmp.open("w", encoding="utf-8") as handle:
                for record in records:
                    handle.write(canonical_json(record) + "\n")
            tmp.replace(path)

    def load(self, kind: str) -> list[dict]:
        path = self._path_for(kind)
        if not path.exists():
            return []
        return [
            json.loads(line)
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

    # ---- annotations, one file per annotator ----

    def _annotation_path(self, annotator_id: str) -> Path:
        return self.run_dir / "annotations" / f"{_safe_name(annotator_id)}.jsonl"

    def append_annotation(self, annotator_id: str, record: dict) -> None:
        path = self._annotation_path(annotator_id)
        with self._lock:
            with path.open("a", encoding="utf-8") as handle:
                handle.write(canonical_json(record) + "\n")
                handle.flush()

    def replace_annotations(self, annotator_id: str, records: Iterable[dict]) -> None:
        path = self._annotation_path(annotator_id)
        tmp = path.with_suffix(".jsonl.tmp")
        with self._lock:
            with tmp.open("w", encoding="utf-8") as handle:
                for record in records:
                    handle.write(canonical_json(record) + "\n")
            tmp.replace(path)

    def load_annotations(self, annotator_id: str | None = None) -> list[dict]:
        """All annotation records, or those of one annotator."""
        folder = self.run_dir / "annotations"
        if annotator_id is not None:
            paths: Sequence[Path] = [self._annotation_path(annotator_id)]
        else:
            paths = sorted(folder.glob("*.jsonl"))
        records: list[dict] = []
        for path in paths:
            if not path.exists():
                continue
            records.extend(
                json.loads(line)
                for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            )
        return records

    def annotator_ids(self) -> list[str]:
        folder = self.run_dir / "annotations"
        ids = {rec["annotator_id"] for p in sorted(folder.glob("*.jsonl"))
               for rec in map(json.loads, p.read_text(encoding="utf-8").splitlines())
               if rec}
        return sorted(ids)

    # ---- reports ----

    def report_path(self, name: str) -> Path:
        return self.run_dir / "reports" / name

    def write_report(self, name: str, text: str) -> Path:
        path = self.report_path(name)
        path.parent.mkdir(exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path
