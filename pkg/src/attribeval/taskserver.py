"""Local HTTP service that dispenses recovery tasks to human annotators.

The server walks annotators through the open tasks least-annotated-first,
never hands the same claim to one annotator twice, interleaves control
questions at a fixed cadence, and retires annotators whose control accuracy
falls below a cutoff.  Ground truth and control kinds never leave the
process; clients only ever see the masked task view.

All decision logic lives in ``TaskBoard`` so it can be driven directly in
tests; the FastAPI app is a thin translation layer over it.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .corpus import ClaimRecord
from .recovery import AnnotationRecord, RecoveryTask, control_correct
from .store import RunStore

__all__ = [
    "AnnotatorProfile",
    "TaskBoard",
    "TaskBoardError",
    "DisqualifiedError",
    "UnknownTaskError",
    "ConflictError",
    "SubmissionError",
    "task_view",
    "create_app",
]

logger = logging.getLogger(__name__)


class TaskBoardError(Exception):
    """Base class for dispatch and submission failures."""


class DisqualifiedError(TaskBoardError):
    """The annotator has been removed for low control accuracy."""


class UnknownTaskError(TaskBoardError):
    """The task id does not exist on this board."""


class ConflictError(TaskBoardError):
    """The submission clashes with dispatch state (duplicate or undispensed)."""


class SubmissionError(TaskBoardError):
    """The submission payload violates the wire contract."""


@dataclass
class AnnotatorProfile:
    """Running quality record for one human annotator.

    ``control_accuracy`` is 1.0 until the first control is answered; the
    status flips to disqualified once accuracy drops below the cutoff with
    at least the minimum number of controls answered.
    """

    annotator_id: str
    completed: int = 0
    dispensed: int = 0
    controls_answered: int = 0
    controls_correct: int = 0
    status: str = "active"

    @property
    def control_accuracy(self) -> float:
        if self.controls_answered == 0:
            return 1.0
        return self.controls_correct / self.controls_answered

    def to_dict(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "completed": self.completed,
            "controls_answered": self.controls_answered,
            "control_accuracy": self.control_accuracy,
            "status": self.status,
        }


def task_view(task: RecoveryTask, claim: ClaimRecord) -> dict:
    """Client-facing serialization of a task.

    Carries everything an annotator needs (claim, veracity, evidence with
    the target passage flagged, selectable sentences) and nothing they must
    not see: no ground truth, no control kind, no unmasked text.
    """
    return {
        "task_id": task.task_id,
        "claim_id": task.claim_id,
        "claim": claim.claim,
        "veracity": claim.veracity,
        "evidence": [
            {
                "idx": passage.idx,
                "text": passage.text,
                "is_target": passage.idx == task.masked_evidence_idx,
            }
            for passage in claim.evidence
        ],
        "sentences": list(task.presented_sentences),
    }


class TaskBoard:
    """Dispatch state machine over one run's recovery tasks.

    Scored tasks (control_kind "none") are dispensed least-annotated-first,
    capped at ``coverage_target`` annotations each; in-flight assignments
    count toward the cap so a task's final slot is never handed out twice.
    Every ``control_every``-th dispensation to an annotator is a control
    task when one is eligible.  An annotator holds at most one in-flight
    assignment; fetching again returns the same task.  Assignments live in
    memory only, so restarting the server releases abandoned ones.

    When a ``store`` is given, submissions are appended to it and existing
    human annotations are replayed on construction so a restarted server
    resumes where it left off.
    """

    def __init__(
        self,
        tasks: list[RecoveryTask],
        claims: dict[str, ClaimRecord],
        store: RunStore | None = None,
        coverage_target: int = 5,
        control_every: int = 5,
        accuracy_cutoff: float = 0.7,
        min_controls: int = 3,
    ) -> None:
        if coverage_target < 1:
            raise ValueError(f"coverage target must be positive, got {coverage_target}")
        for task in tasks:
            if task.claim_id not in claims:
                raise ValueError(f"task {task.task_id} references unknown claim {task.claim_id}")
        self._tasks = {task.task_id: task for task in tasks}
        if len(self._tasks) != len(tasks):
            raise ValueError("duplicate task ids")
        self._claims = claims
        self._store = store
        self.coverage_target = coverage_target
        self.control_every = control_every
        self.accuracy_cutoff = accuracy_cutoff
        self.min_controls = min_controls
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], AnnotationRecord] = {}
        self._profiles: dict[str, AnnotatorProfile] = {}
        self._assignments: dict[str, str] = {}
        if store is not None:
            self._replay(store)

    def _replay(self, store: RunStore) -> None:
        for annotator_id in store.annotator_ids():
            for payload in store.load_annotations(annotator_id):
                record = AnnotationRecord.from_dict(payload)
                if record.annotator_kind != "human":
                    continue
                task = self._tasks.get(record.task_id)
                if task is None:
                    continue
                self._register(task, record, persist=False)

    def _profile(self, annotator_id: str) -> AnnotatorProfile:
        if annotator_id not in self._profiles:
            self._profiles[annotator_id] = AnnotatorProfile(annotator_id)
        return self._profiles[annotator_id]

    def _register(self, task: RecoveryTask, record: AnnotationRecord, persist: bool) -> None:
        self._records[(record.annotator_id, record.task_id)] = record
        profile = self._profile(record.annotator_id)
        profile.completed += 1
        profile.dispensed = max(profile.dispensed, profile.completed)
        if task.control_kind != "none":
            profile.controls_answered += 1
            profile.controls_correct += control_correct(task, record.prediction)
            if (
                profile.controls_answered >= self.min_controls
                and profile.control_accuracy < self.accuracy_cutoff
            ):
                profile.status = "disqualified"
        if persist and self._store is not None:
            self._store.append_annotation(record.annotator_id, record.to_dict())

    def _annotation_count(self, task_id: str) -> int:
        stored = sum(1 for (_, tid) in self._records if tid == task_id)
        in_flight = sum(1 for tid in self._assignments.values() if tid == task_id)
        return stored + in_flight

    def _seen_claims(self, annotator_id: str) -> set[str]:
        seen = {
            self._tasks[tid].claim_id
            for (aid, tid) in self._records
            if aid == annotator_id
        }
        assigned = self._assignments.get(annotator_id)
        if assigned is not None:
            seen.add(self._tasks[assigned].claim_id)
        return seen

    def _eligible(self, annotator_id: str, want_control: bool) -> RecoveryTask | None:
        seen_claims = self._seen_claims(annotator_id)
        candidates = []
        for task in self._tasks.values():
            if (task.control_kind != "none") != want_control:
                continue
            if (annotator_id, task.task_id) in self._records:
                continue
            if task.claim_id in seen_claims:
                continue
            count = self._annotation_count(task.task_id)
            if not want_control and count >= self.coverage_target:
                continue
            candidates.append((count, task.task_id))
        if not candidates:
            return None
        _, best = min(candidates)
        return self._tasks[best]

    def next_task(self, annotator_id: str) -> RecoveryTask | None:
        """Assign and return the next task, or None when none remain.

        Re-fetching without submitting returns the currently assigned task.
        Controls are only dispensed at the cadence slot; scored exhaustion
        is final even while unanswered controls remain.
        """
        with self._lock:
            profile = self._profile(annotator_id)
            if profile.status == "disqualified":
                raise DisqualifiedError(f"annotator {annotator_id} is disqualified")
            assigned = self._assignments.get(annotator_id)
            if assigned is not None:
                return self._tasks[assigned]
            control_due = (
                self.control_every > 0
                and (profile.dispensed + 1) % self.control_every == 0
            )
            task = None
            if control_due:
                task = self._eligible(annotator_id, want_control=True)
            if task is None:
                task = self._eligible(annotator_id, want_control=False)
            if task is None:
                return None
            self._assignments[annotator_id] = task.task_id
            profile.dispensed += 1
            return task

    def submit(
        self,
        annotator_id: str,
        task_id: str,
        prediction: frozenset[int],
        none_selected: bool,
        utility: float | None = None,
    ) -> AnnotationRecord:
        """Record one human answer and update the annotator's profile."""
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTaskError(f"unknown task {task_id}")
            profile = self._profile(annotator_id)
            if profile.status == "disqualified":
                raise DisqualifiedError(f"annotator {annotator_id} is disqualified")
            if (annotator_id, task_id) in self._records:
                raise ConflictError(f"annotator {annotator_id} already answered {task_id}")
            if self._assignments.get(annotator_id) != task_id:
                raise ConflictError(f"task {task_id} was not dispensed to {annotator_id}")
            if bool(prediction) == none_selected:
                raise SubmissionError("exactly one of prediction or none_selected required")
            bad = [p for p in prediction if not 0 <= p < len(task.presented_sentences)]
            if bad:
                raise SubmissionError(f"prediction references nonexistent sentences {sorted(bad)}")
            if utility is not None and not 0.0 <= utility <= 100.0:
                raise SubmissionError(f"utility {utility} outside [0, 100]")
            record = AnnotationRecord(
                task_id=task_id,
                annotator_id=annotator_id,
                annotator_kind="human",
                prediction=frozenset(prediction),
                utility=utility,
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
            del self._assignments[annotator_id]
            self._register(task, record, persist=True)
            return record

    def view(self, task: RecoveryTask) -> dict:
        return task_view(task, self._claims[task.claim_id])

    def profile(self, annotator_id: str) -> AnnotatorProfile:
        with self._lock:
            return self._profile(annotator_id)

    def records(self) -> list[AnnotationRecord]:
        with self._lock:
            return list(self._records.values())

    def task(self, task_id: str) -> RecoveryTask:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise UnknownTaskError(f"unknown task {task_id}") from None

    def progress(self) -> dict:
        with self._lock:
            scored = [t for t in self._tasks.values() if t.control_kind == "none"]
            per_task = {
                task.task_id: sum(1 for (_, tid) in self._records if tid == task.task_id)
                for task in scored
            }
            completed = sum(
                1 for count in per_task.values() if count >= self.coverage_target
            )
            mean = (
                sum(per_task.values()) / len(per_task) if per_task else 0.0
            )
            return {
                "tasks": {
                    "total": len(scored),
                    "completed": completed,
                    "open": len(scored) - completed,
                },
                "controls": {
                    "total": len(self._tasks) - len(scored),
                },
                "coverage": {
                    "target": self.coverage_target,
                    "mean": mean,
                    "per_task": dict(sorted(per_task.items())),
                },
                "annotators": [
                    profile.to_dict()
                    for _, profile in sorted(self._profiles.items())
                ],
            }


def _parse_submission(payload: object) -> tuple[frozenset[int], bool, float | None]:
    if not isinstance(payload, dict):
        raise SubmissionError("body must be a JSON object")
    allowed = {"prediction", "none_selected", "utility"}
    unknown = set(payload) - allowed
    if unknown:
        raise SubmissionError(f"unknown fields {sorted(unknown)}")
    missing = {"prediction", "none_selected"} - set(payload)
    if missing:
        raise SubmissionError(f"missing fields {sorted(missing)}")
    prediction = payload["prediction"]
    if not isinstance(prediction, list) or not all(
        isinstance(p, int) and not isinstance(p, bool) for p in prediction
    ):
        raise SubmissionError("prediction must be a list of integers")
    none_selected = payload["none_selected"]
    if not isinstance(none_selected, bool):
        raise SubmissionError("none_selected must be a boolean")
    utility = payload.get("utility")
    if utility is not None and not isinstance(utility, (int, float)):
        raise SubmissionError("utility must be a number or null")
    return frozenset(prediction), none_selected, None if utility is None else float(utility)


def create_app(board: TaskBoard, ui_dir: str | Path | None = None):
    """Build the FastAPI app serving the annotation API and, optionally,
    the static annotation UI bundle."""
    from fastapi import FastAPI, Query
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="citation recovery annotation server")

    @app.exception_handler(TaskBoardError)
    async def board_error(request, exc: TaskBoardError) -> JSONResponse:
        status = 500
        if isinstance(exc, DisqualifiedError):
            status = 403
        elif isinstance(exc, UnknownTaskError):
            status = 404
        elif isinstance(exc, ConflictError):
            status = 409
        elif isinstance(exc, SubmissionError):
            status = 400
        return JSONResponse({"detail": str(exc)}, status_code=status)

    @app.get("/api/health")
    async def health() -> dict:
        return {"status": "ok"}

    @app.get("/api/tasks/next")
    async def next_task(annotator: str = Query(min_length=1)) -> Response:
        task = board.next_task(annotator)
        if task is None:
            return Response(status_code=204)
        return JSONResponse(board.view(task))

    @app.post("/api/tasks/{task_id}/annotation")
    async def submit(task_id: str, payload: dict, annotator: str = Query(min_length=1)) -> JSONResponse:
        prediction, none_selected, utility = _parse_submission(payload)
        board.submit(annotator, task_id, prediction, none_selected, utility)
        return JSONResponse({"status": "recorded"}, status_code=201)

    @app.get("/api/progress")
    async def progress() -> dict:
        return board.progress()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
