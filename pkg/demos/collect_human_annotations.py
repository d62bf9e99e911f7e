"""
Dispatching recovery tasks to human annotators
==============================================

The task board hands out the least-annotated task first, interleaves
control questions with known answers, and disqualifies annotators whose
control accuracy drops below the cutoff.  Everything here runs in-process;
the HTTP server in `attribeval.taskserver` wraps this same board.
"""
from attribeval.citeparse import extract_citation_map, segment_sentences
from attribeval.corpus import ClaimRecord, EvidencePassage, ExplanationRecord
from attribeval.recovery import build_tasks, make_control_task
from attribeval.taskserver import DisqualifiedError, TaskBoard


def make_pair(claim_id: str, indices: tuple[int, ...]) -> tuple[ClaimRecord, ExplanationRecord]:
    claim = ClaimRecord(
        id=claim_id,
        claim=f"Claim {claim_id} about a widely shared statistic.",
        veracity="false",
        evidence=tuple(
            EvidencePassage(i, f"Passage {i} documents what the record actually shows.")
            for i in indices
        ),
        gold_evidence_sets=(frozenset(indices[:1]),),
    )
    text = " ".join(
        f"Sentence number {pos} rebuts one part of the story [{i}]."
        for pos, i in enumerate(indices)
    )
    sentences = tuple(segment_sentences(text))
    explanation = ExplanationRecord(
        claim_id=claim_id,
        generator_id="demo-model",
        evidence_source="machine",
        selected_evidence=indices,
        raw_text=text,
        sentences=sentences,
        citation_map=extract_citation_map(sentences, evidence_universe=indices),
    )
    return claim, explanation


claim_a, explanation_a = make_pair("cA", (0, 1))
claim_b, explanation_b = make_pair("cB", (0, 1, 2))

tasks = build_tasks(claim_a, explanation_a, "full", seed=5)
tasks.append(make_control_task(claim_b, explanation_b, "positive", seed=5))
tasks.append(make_control_task(claim_b, explanation_b, "negative", seed=5))

board = TaskBoard(
    tasks,
    {"cA": claim_a, "cB": claim_b},
    coverage_target=1,   # one annotation per task is enough for the demo
    control_every=2,     # every second dispensed task is a control
    min_controls=1,
    accuracy_cutoff=0.7,
)

# A hasty annotator: fine on the first scored task, wrong on the control.
task = board.next_task("hasty")
view = board.view(task)  # what the client sees: no ground truth, no control flag
print(f"hasty gets {view['task_id']} ({len(view['sentences'])} sentences shown)")
board.submit("hasty", task.task_id, prediction=[0], none_selected=False, utility=70)

task = board.next_task("hasty")
print(f"hasty gets control {task.task_id} and answers it wrong")
board.submit("hasty", task.task_id, prediction=[0, 1], none_selected=False)

try:
    board.next_task("hasty")
except DisqualifiedError as exc:
    print(f"hasty is out: {exc}")

# A careful annotator finishes the rest, answering controls correctly.
while (task := board.next_task("careful")) is not None:
    answer = sorted(task.ground_truth)
    board.submit("careful", task.task_id,
                 prediction=answer, none_selected=not answer, utility=55)
    kind = task.control_kind if task.control_kind != "none" else "scored"
    print(f"careful answers {task.task_id} ({kind}) with {answer or 'none'}")

progress = board.progress()
print(f"\ncompleted {progress['tasks']['completed']} of {progress['tasks']['total']} tasks")
for profile in progress["annotators"]:
    print(f"  {profile['annotator_id']}: status {profile['status']},"
          f" control accuracy {profile['control_accuracy']:.2f}")
