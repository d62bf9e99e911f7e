"""Tests for recovery task construction, controls and automatic annotators."""
from __future__ import annotations

import httpx
import pytest

from attribeval.genpipe import GenerationConfig, ParseFailure, TransportError
from attribeval.recovery import (
    AnnotationRecord,
    HttpEntailmentJudge,
    RecoveryTask,
    annotate_with_llm,
    annotate_with_nli,
    build_tasks,
    control_correct,
    make_control_task,
    parse_recovery_output,
)
from helpers import QueueTransport, make_claim, make_explanation

CONFIG = GenerationConfig(generator_id="judge-model", backoff_base=0.0)


def test_build_tasks_full_one_per_cited_index() -> None:
    claim = make_claim()
    explanation = make_explanation()
    tasks = build_tasks(claim, explanation, "full", seed=5)
    assert [t.masked_evidence_idx for t in tasks] == [9, 10, 11]
    assert [t.task_id for t in tasks] == ["c1:mask9", "c1:mask10", "c1:mask11"]
    assert len(tasks) == len(explanation.citation_map.cited_indices())
    for task in tasks:
        assert task.control_kind == "none"
        assert task.ground_truth == explanation.citation_map.sentences_citing(
            task.masked_evidence_idx
        )
        assert str(task.masked_evidence_idx) not in " ".join(
            f"[{i}]" for s in task.presented_sentences for i in [task.masked_evidence_idx] if f"[{i}]" in s
        )
        assert task.evidence_text == claim.evidence_text(task.masked_evidence_idx)
        assert task.numbering_base == 0


def test_build_tasks_sample_is_seed_stable() -> None:
    claim = make_claim()
    explanation = make_explanation()
    first = build_tasks(claim, explanation, "sample", seed=5)
    second = build_tasks(claim, explanation, "sample", seed=5)
    assert len(first) == len(second) == 1
    assert first[0].task_id == second[0].task_id

    picks = {build_tasks(claim, explanation, "sample", seed=s)[0].masked_evidence_idx
             for s in range(30)}
    assert len(picks) > 1
    assert picks <= {9, 10, 11}


def test_build_tasks_singleton_and_errors() -> None:
    claim = make_claim(indices=(4,))
    explanation = make_explanation(text="Only one passage matters [4].", selected=(4,))
    sample = build_tasks(claim, explanation, "sample", seed=1)
    full = build_tasks(claim, explanation, "full", seed=1)
    assert [t.task_id for t in sample] == [t.task_id for t in full] == ["c1:mask4"]

    stray = make_explanation(text="Cites something unknown [99].", selected=(9,))
    with pytest.raises(ValueError, match="nothing to mask"):
        build_tasks(make_claim(), stray, "full", seed=1)
    with pytest.raises(ValueError, match="setting"):
        build_tasks(claim, explanation, "both", seed=1)


def test_make_control_task_positive() -> None:
    claim = make_claim()
    explanation = make_explanation()
    task = make_control_task(claim, explanation, "positive", seed=3)
    assert task.control_kind == "positive"
    assert len(task.ground_truth) == 1
    assert task.presented_sentences == task.masked.masked_sentences
    assert task.task_id.startswith("c1:pos")


def test_make_control_task_negative_removes_citing_sentence() -> None:
    claim = make_claim()
    explanation = make_explanation()
    task = make_control_task(claim, explanation, "negative", seed=3)
    assert task.control_kind == "negative"
    assert task.ground_truth == frozenset()
    assert len(task.presented_sentences) == len(explanation.sentences) - 1
    (answer_pos,) = task.masked.ground_truth
    removed = task.masked.masked_sentences[answer_pos]
    assert removed not in task.presented_sentences


def test_make_control_task_requires_singleton_citation() -> None:
    claim = make_claim(indices=(7,))
    # index 7 cited by two sentences: no singleton candidates exist
    explanation = make_explanation(
        text="First mention [7]. Second mention of the same [7].", selected=(7,)
    )
    with pytest.raises(ValueError, match="no qualifying"):
        make_control_task(claim, explanation, "positive", seed=1)
    with pytest.raises(ValueError, match="control kind"):
        make_control_task(claim, explanation, "sideways", seed=1)


def test_control_correct_predicates() -> None:
    claim = make_claim()
    explanation = make_explanation()
    positive = make_control_task(claim, explanation, "positive", seed=3)
    negative = make_control_task(claim, explanation, "negative", seed=3)

    assert control_correct(positive, positive.ground_truth)
    assert not control_correct(positive, frozenset())
    wrong_extra = min(frozenset({0, 1, 2}) - positive.ground_truth)
    assert not control_correct(positive, positive.ground_truth | {wrong_extra})
    assert control_correct(negative, frozenset())
    assert not control_correct(negative, frozenset({0}))
    with pytest.raises(ValueError):
        control_correct(build_tasks(claim, explanation, "sample", 1)[0], frozenset())


def test_parse_recovery_output_cases() -> None:
    assert parse_recovery_output("0", 5) == frozenset({0})
    assert parse_recovery_output("-1", 5) == frozenset()
    assert parse_recovery_output("0,0,2", 3) == frozenset({0, 2})
    assert parse_recovery_output("Answers: 1, 3", 5) == frozenset({1, 3})
    assert parse_recovery_output("I think...\n0, 2", 3) == frozenset({0, 2})
    assert parse_recovery_output("5", 3) == frozenset()      # out of range, dropped
    assert parse_recovery_output("-1, 2", 3) == frozenset({2})
    with pytest.raises(ParseFailure):
        parse_recovery_output("no numbers here", 3)
    with pytest.raises(ValueError):
        parse_recovery_output("0", 0)


def test_annotate_with_llm_parses_prediction() -> None:
    claim = make_claim()
    task = build_tasks(claim, make_explanation(), "full", seed=1)[0]
    record = annotate_with_llm(task, QueueTransport(["0,2"]), CONFIG)
    assert record.prediction == frozenset({0, 2})
    assert record.annotator_id == "llm:judge-model"
    assert record.annotator_kind == "llm"
    assert record.raw_output == "0,2"
    assert not record.parse_failed
    assert record.timestamp is None

    empty = annotate_with_llm(task, QueueTransport(["-1"]), CONFIG)
    assert empty.prediction == frozenset()
    assert not empty.parse_failed


def test_annotate_with_llm_flags_parse_failure() -> None:
    claim = make_claim()
    task = build_tasks(claim, make_explanation(), "full", seed=1)[0]
    transport = QueueTransport(["shrug", "shrug", "shrug"])
    record = annotate_with_llm(task, transport, CONFIG)
    assert record.prediction == frozenset()
    assert record.parse_failed
    assert record.raw_output == "shrug"
    assert len(transport.calls) == 1 + CONFIG.parse_retries


def test_annotate_with_llm_prompt_contains_task_material() -> None:
    claim = make_claim()
    task = build_tasks(claim, make_explanation(), "full", seed=1)[0]
    transport = QueueTransport(["0"])
    annotate_with_llm(task, transport, CONFIG)
    prompt = transport.calls[0][0][0]["content"]
    assert task.evidence_text in prompt
    for pos, sentence in enumerate(task.presented_sentences):
        assert f"{pos}. {sentence}" in prompt


class StubJudge:
    def __init__(self, fn):
        self.fn = fn

    def entails(self, premise: str, hypothesis: str) -> bool:
        return self.fn(premise, hypothesis)


def test_annotate_with_nli_judges_each_sentence() -> None:
    claim = make_claim()
    task = build_tasks(claim, make_explanation(), "full", seed=1)[0]

    nothing = annotate_with_nli(task, StubJudge(lambda p, h: False))
    assert nothing.prediction == frozenset()
    assert nothing.annotator_kind == "nli"

    everything = annotate_with_nli(task, StubJudge(lambda p, h: True), annotator_id="nli:all")
    assert everything.prediction == frozenset(range(len(task.presented_sentences)))
    assert everything.annotator_id == "nli:all"

    second_only = annotate_with_nli(
        task, StubJudge(lambda p, h: h == task.presented_sentences[1])
    )
    assert second_only.prediction == frozenset({1})


def test_annotate_with_nli_propagates_judge_failure() -> None:
    claim = make_claim()
    task = build_tasks(claim, make_explanation(), "full", seed=1)[0]

    def broken(premise: str, hypothesis: str) -> bool:
        raise TransportError("judge down")

    with pytest.raises(TransportError):
        annotate_with_nli(task, StubJudge(broken))


def test_http_entailment_judge_shapes() -> None:
    def three_way(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json={"label": "entailment"})

    judge = HttpEntailmentJudge(
        "https://nli.example/judge",
        client=httpx.Client(transport=httpx.MockTransport(three_way)),
    )
    assert judge.entails("p", "h") is True

    def binary(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json={"entailed": False})

    judge = HttpEntailmentJudge(
        "https://nli.example/judge",
        client=httpx.Client(transport=httpx.MockTransport(binary)),
    )
    assert judge.entails("p", "h") is False

    def error(request: httpx.Request) -> httpx.Response:
        return httpx.Response(503, text="overloaded")

    judge = HttpEntailmentJudge(
        "https://nli.example/judge",
        client=httpx.Client(transport=httpx.MockTransport(error)),
    )
    with pytest.raises(TransportError, match="503"):
        judge.entails("p", "h")


def test_task_and_annotation_serialization_round_trip() -> None:
    claim = make_claim()
    explanation = make_explanation()
    for task in (
        build_tasks(claim, explanation, "full", seed=1)[0],
        make_control_task(claim, explanation, "positive", seed=2),
        make_control_task(claim, explanation, "negative", seed=2),
    ):
        assert RecoveryTask.from_dict(task.to_dict()) == task

    record = AnnotationRecord(
        task_id="c1:mask9",
        annotator_id="human:w1",
        annotator_kind="human",
        prediction=frozenset({0, 2}),
        utility=85.0,
        timestamp="2024-06-01T12:00:00+00:00",
    )
    assert AnnotationRecord.from_dict(record.to_dict()) == record


def test_record_validation() -> None:
    with pytest.raises(ValueError, match="utility"):
        AnnotationRecord(
            task_id="t", annotator_id="a", annotator_kind="human",
            prediction=frozenset(), utility=101.0,
        )
    with pytest.raises(ValueError, match="annotator kind"):
        AnnotationRecord(
            task_id="t", annotator_id="a", annotator_kind="robot", prediction=frozenset()
        )
    claim = make_claim()
    task = build_tasks(claim, make_explanation(), "full", seed=1)[0]
    with pytest.raises(ValueError, match="negative control"):
        RecoveryTask(
            task_id="t", claim_id="c", masked_evidence_idx=9,
            evidence_text="e", masked=task.masked,
            presented_sentences=task.presented_sentences,
            ground_truth=frozenset({0}), control_kind="negative",
        )
    with pytest.raises(ValueError, match="exactly one"):
        RecoveryTask(
            task_id="t", claim_id="c", masked_evidence_idx=9,
            evidence_text="e", masked=task.masked,
            presented_sentences=task.presented_sentences,
            ground_truth=frozenset({0, 1}), control_kind="positive",
        )
    with pytest.raises(ValueError, match="range"):
        RecoveryTask(
            task_id="t", claim_id="c", masked_evidence_idx=9,
            evidence_text="e", masked=task.masked,
            presented_sentences=task.presented_sentences,
            ground_truth=frozenset({99}),
        )
