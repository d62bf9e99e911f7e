"""Masked citation recovery tasks and the automatic annotators that solve
them.

A recovery task hides one evidence index's citation markers and asks an
annotator which sentences should cite that passage; the hidden ground truth
is the sentence set that actually cited it.  Control tasks with known
answers (one forced answer, or none after deleting the citing sentence)
measure annotator reliability.
"""
from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass

import httpx

from .citeparse import MaskedExplanation, mask_citation
from .corpus import ClaimRecord, ExplanationRecord
from .genpipe import (
    ChatTransport,
    GenerationConfig,
    ParseFailure,
    TransportError,
    complete_with_retries,
    user_message,
)
from .prompts import render_recovery_prompt

__all__ = [
    "RecoveryTask",
    "AnnotationRecord",
    "EntailmentJudge",
    "HttpEntailmentJudge",
    "build_tasks",
    "make_control_task",
    "annotate_with_llm",
    "annotate_with_nli",
    "parse_recovery_output",
    "control_correct",
]

logger = logging.getLogger(__name__)

ANNOTATOR_KINDS = ("human", "llm", "nli")
CONTROL_KINDS = ("none", "positive", "negative")


@dataclass(frozen=True)
class RecoveryTask:
    """One masked recovery question, self-contained for any annotator.

    ``presented_sentences`` is what the annotator sees: the masked
    explanation's sentences, except for negative controls where the citing
    sentence is deleted so that no correct answer exists.  ``ground_truth``
    holds positions into ``presented_sentences`` and stays hidden from
    annotators.
    """

    task_id: str
    claim_id: str
    masked_evidence_idx: int
    evidence_text: str
    masked: MaskedExplanation
    presented_sentences: tuple[str, ...]
    ground_truth: frozenset[int]
    numbering_base: int = 0
    control_kind: str = "none"

    def __post_init__(self) -> None:
        if self.control_kind not in CONTROL_KINDS:
            raise ValueError(f"unknown control kind {self.control_kind!r}")
        if self.control_kind == "negative" and self.ground_truth:
            raise ValueError("negative control must have empty ground truth")
        if self.control_kind == "positive" and len(self.ground_truth) != 1:
            raise ValueError("positive control must have exactly one answer")
        if not all(0 <= p < len(self.presented_sentences) for p in self.ground_truth):
            raise ValueError("ground truth outside presented sentence range")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "claim_id": self.claim_id,
            "masked_evidence_idx": self.masked_evidence_idx,
            "evidence_text": self.evidence_text,
            "masked": {
                "original_text": self.masked.original_text,
                "masked_text": self.masked.masked_text,
                "masked_evidence_idx": self.masked.masked_evidence_idx,
                "masked_sentences": list(self.masked.masked_sentences),
                "ground_truth": sorted(self.masked.ground_truth),
                "removal_log": [[pos, removed] for pos, removed in self.masked.removal_log],
            },
            "presented_sentences": list(self.presented_sentences),
            "ground_truth": sorted(self.ground_truth),
            "numbering_base": self.numbering_base,
            "control_kind": self.control_kind,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RecoveryTask":
        m = data["masked"]
        masked = MaskedExplanation(
            original_text=m["original_text"],
            masked_text=m["masked_text"],
            masked_evidence_idx=m["masked_evidence_idx"],
            masked_sentences=tuple(m["masked_sentences"]),
            ground_truth=frozenset(m["ground_truth"]),
            removal_log=tuple((pos, removed) for pos, removed in m["removal_log"]),
        )
        return cls(
            task_id=data["task_id"],
            claim_id=data["claim_id"],
            masked_evidence_idx=data["masked_evidence_idx"],
            evidence_text=data["evidence_text"],
            masked=masked,
            presented_sentences=tuple(data["presented_sentences"]),
            ground_truth=frozenset(data["ground_truth"]),
            numbering_base=data.get("numbering_base", 0),
            control_kind=data.get("control_kind", "none"),
        )


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's answer to one recovery task.

    ``prediction`` is the chosen sentence positions, empty meaning "no
    sentence should cite this".  ``utility`` is an optional helpfulness
    rating on [0, 100].  Timestamps are set only for human submissions;
    automatic annotators stay deterministic.
    """

    task_id: str
    annotator_id: str
    annotator_kind: str
    prediction: frozenset[int]
    utility: float | None = None
    raw_output: str | None = None
    timestamp: str | None = None
    parse_failed: bool = False

    def __post_init__(self) -> None:
        if self.annotator_kind not in ANNOTATOR_KINDS:
            raise ValueError(f"unknown annotator kind {self.annotator_kind!r}")
        if self.utility is not None and not 0.0 <= self.utility <= 100.0:
            raise ValueError(f"utility {self.utility} outside [0, 100]")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "annotator_kind": self.annotator_kind,
            "prediction": sorted(self.prediction),
            "utility": self.utility,
            "raw_output": self.raw_output,
            "timestamp": self.timestamp,
            "parse_failed": self.parse_failed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationRecord":
        return cls(
            task_id=data["task_id"],
            annotator_id=data["annotator_id"],
            annotator_kind=data["annotator_kind"],
            prediction=frozenset(data["prediction"]),
            utility=data.get("utility"),
            raw_output=data.get("raw_output"),
            timestamp=data.get("timestamp"),
            parse_failed=data.get("parse_failed", False),
        )


def _maskable_indices(claim: ClaimRecord, explanation: ExplanationRecord) -> list[int]:
    universe = claim.evidence_universe()
    return sorted(idx for idx in explanation.citation_map.cited_indices() if idx in universe)


def _make_task(
    claim: ClaimRecord, explanation: ExplanationRecord, evidence_idx: int
) -> tuple[MaskedExplanation, str]:
    masked = mask_citation(
        explanation.raw_text,
        evidence_idx,
        sentences=explanation.sentences,
        citation_map=explanation.citation_map,
    )
    return masked, claim.evidence_text(evidence_idx)


def build_tasks(
    claim: ClaimRecord,
    explanation: ExplanationRecord,
    setting: str,
    seed: int,
) -> list[RecoveryTask]:
    """Create the recovery tasks for one explanation.

    ``full`` yields one task per cited evidence index, each masking only
    its own index; ``sample`` yields a single task for a seeded-random
    cited index, stable across processes for a given seed.  Only indices
    present in the claim's evidence can be masked.
    """
    if setting not in ("sample", "full"):
        raise ValueError(f"setting must be 'sample' or 'full', got {setting!r}")
    candidates = _maskable_indices(claim, explanation)
    if not candidates:
        raise ValueError(f"nothing to mask: explanation for {claim.id} cites no known evidence")
    if setting == "sample":
        rng = random.Random(f"{claim.id}|{seed}|sample-pick")
        candidates = [rng.choice(candidates)]
    tasks = []
    for idx in candidates:
        masked, evidence_text = _make_task(claim, explanation, idx)
        tasks.append(
            RecoveryTask(
                task_id=f"{claim.id}:mask{idx}",
                claim_id=claim.id,
                masked_evidence_idx=idx,
                evidence_text=evidence_text,
                masked=masked,
                presented_sentences=masked.masked_sentences,
                ground_truth=masked.ground_truth,
            )
        )
    return tasks


def make_control_task(
    claim: ClaimRecord,
    explanation: ExplanationRecord,
    kind: str,
    seed: int,
) -> RecoveryTask:
    """Create a quality-control task with a known correct answer.

    Positive controls pick an index cited by exactly one sentence, so the
    answer is that single sentence.  Negative controls additionally delete
    the citing sentence from the presented explanation, making the explicit
    "no sentence" choice the only correct answer.
    """
    if kind not in ("positive", "negative"):
        raise ValueError(f"control kind must be 'positive' or 'negative', got {kind!r}")
    singletons = [
        idx
        for idx in _maskable_indices(claim, explanation)
        if len(explanation.citation_map.sentences_citing(idx)) == 1
    ]
    if kind == "negative":
        # deleting the lone citing sentence must leave something to show
        singletons = [s for s in singletons if len(explanation.sentences) >= 2]
    if not singletons:
        raise ValueError(f"no qualifying evidence index for a {kind} control on {claim.id}")
    rng = random.Random(f"{claim.id}|{seed}|control-{kind}")
    idx = rng.choice(singletons)
    masked, evidence_text = _make_task(claim, explanation, idx)
    (answer_pos,) = masked.ground_truth
    if kind == "positive":
        return RecoveryTask(
            task_id=f"{claim.id}:pos{idx}",
            claim_id=claim.id,
            masked_evidence_idx=idx,
            evidence_text=evidence_text,
            masked=masked,
            presented_sentences=masked.masked_sentences,
            ground_truth=masked.ground_truth,
            control_kind="positive",
        )
    presented = tuple(
        s for pos, s in enumerate(masked.masked_sentences) if pos != answer_pos
    )
    return RecoveryTask(
        task_id=f"{claim.id}:neg{idx}",
        claim_id=claim.id,
        masked_evidence_idx=idx,
        evidence_text=evidence_text,
        masked=masked,
        presented_sentences=presented,
        ground_truth=frozenset(),
        control_kind="negative",
    )


def control_correct(task: RecoveryTask, prediction: frozenset[int]) -> bool:
    """Whether a prediction answers a control task correctly.

    Negative controls are correct only on the empty prediction; positive
    controls only on exactly the singleton ground truth.
    """
    if task.control_kind == "negative":
        return not prediction
    if task.control_kind == "positive":
        return prediction == task.ground_truth
    raise ValueError(f"task {task.task_id} is not a control task")


def parse_recovery_output(text: str, n_sentences: int) -> frozenset[int]:
    """Parse an annotator reply into sentence positions.

    Reads integers from the last line that contains any; "-1" alone means
    the explicit empty answer.  Positions outside [0, n_sentences) are
    dropped with a warning, duplicates collapse.  A reply without digits is
    a parse failure.
    """
    if n_sentences < 1:
        raise ValueError("n_sentences must be at least 1")
    lines_with_digits = [line for line in text.splitlines() if re.search(r"\d", line)]
    if not lines_with_digits:
        raise ParseFailure("no sentence numbers in reply", raw_output=text)
    tokens = [int(tok) for tok in re.findall(r"-?\d+", lines_with_digits[-1])]
    if all(tok == -1 for tok in tokens):
        return frozenset()
    picked = set()
    for tok in tokens:
        if 0 <= tok < n_sentences:
            picked.add(tok)
        else:
            logger.warning("recovery position %d outside [0, %d), dropped", tok, n_sentences)
    return frozenset(picked)


def annotate_with_llm(
    task: RecoveryTask,
    transport: ChatTransport,
    config: GenerationConfig,
    annotator_id: str | None = None,
) -> AnnotationRecord:
    """Solve a recovery task with a zero-shot prompted model.

    The prompt shows the target passage and the numbered presented
    sentences.  Unparseable replies are re-prompted; if they stay
    unparseable, the record carries an empty prediction with the
    parse-failure flag set rather than silently counting as correct.
    """
    annotator = annotator_id or f"llm:{config.generator_id}"
    messages = user_message(
        render_recovery_prompt(task.evidence_text, task.presented_sentences)
    )
    raw = ""
    for _ in range(1 + config.parse_retries):
        raw = complete_with_retries(transport, messages, config)
        try:
            prediction = parse_recovery_output(raw, len(task.presented_sentences))
        except ParseFailure as exc:
            logger.warning("recovery reply unparseable for %s: %s", task.task_id, exc)
            continue
        return AnnotationRecord(
            task_id=task.task_id,
            annotator_id=annotator,
            annotator_kind="llm",
            prediction=prediction,
            raw_output=raw,
        )
    return AnnotationRecord(
        task_id=task.task_id,
        annotator_id=annotator,
        annotator_kind="llm",
        prediction=frozenset(),
        raw_output=raw,
        parse_failed=True,
    )


class EntailmentJudge:
    """Interface for entailment checks between a passage and a sentence."""

    def entails(self, premise: str, hypothesis: str) -> bool:
        raise NotImplementedError


class HttpEntailmentJudge(EntailmentJudge):
    """Entailment judge speaking a small JSON wire protocol.

    POSTs `{premise, hypothesis}` and accepts either a three-way
    `{"label": "entailment" | "neutral" | "contradiction"}` or a binary
    `{"entailed": true|false}` response.
    """

    def __init__(self, endpoint: str, client: httpx.Client | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._client = client or httpx.Client()

    def entails(self, premise: str, hypothesis: str) -> bool:
        try:
            response = self._client.post(
                self.endpoint,
                json={"premise": premise, "hypothesis": hypothesis},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"entailment request failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(
                f"entailment endpoint returned {response.status_code}: {response.text[:200]}"
            )
        data = response.json()
        if "entailed" in data:
            return bool(data["entailed"])
        if "label" in data:
            return data["label"] == "entailment"
        raise TransportError(f"malformed entailment response: {data!r}")


def annotate_with_nli(
    task: RecoveryTask,
    judge: EntailmentJudge,
    annotator_id: str = "nli",
) -> AnnotationRecord:
    """Solve a recovery task by entailment over every presented sentence.

    A sentence joins the prediction when the target passage entails it.
    Pairs are judged independently; judge failures abort the whole task
    rather than producing a partial record.
    """
    prediction = frozenset(
        pos
        for pos, sentence in enumerate(task.presented_sentences)
        if judge.entails(task.evidence_text, sentence)
    )
    return AnnotationRecord(
        task_id=task.task_id,
        annotator_id=annotator_id,
        annotator_kind="nli",
        prediction=prediction,
    )
