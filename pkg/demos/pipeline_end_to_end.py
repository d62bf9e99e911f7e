"""
The evaluation pipeline end to end, without a live model
========================================================

Select evidence, generate a cited explanation, mask each citation, have an
automatic annotator recover it, and aggregate the scores.  A queue of
canned replies stands in for the model, so every number below is
reproducible.
"""
from attribeval.corpus import ClaimRecord, EvidencePassage
from attribeval.genpipe import GenerationConfig, select_evidence, generate_explanation
from attribeval.metrics import GroupReport, set_prf
from attribeval.recovery import annotate_with_llm, build_tasks


class QueueTransport:
    """Replays replies in order; fine when the call order is in plain sight."""

    def __init__(self, replies):
        self.replies = list(replies)

    def complete(self, messages, params):
        return self.replies.pop(0)


claim = ClaimRecord(
    id="c1",
    claim="Sharing a photo of a sick child triggers one dollar donations.",
    veracity="false",
    evidence=(
        EvidencePassage(9, "The carrier said it runs no donation program tied to photo shares."),
        EvidencePassage(10, "The photo was lifted from an unrelated fundraiser page."),
        EvidencePassage(11, "The same text has circulated with different children since 2014."),
    ),
    gold_evidence_sets=(frozenset({9, 11}),),
)

transport = QueueTransport([
    # evidence selection: the model picks two of the three passages
    "Extracted Reasons: [9,11]\n"
    "Justification: The carrier's denial and the recycled text together show the offer is fake.",
    # explanation generation: one citing sentence per selected passage
    "The carrier runs no donation program tied to shares [9]. "
    "The viral text has circulated with different children for years [11].",
    # citation recovery, one reply per masked index (9 then 11)
    "0",
    "0,1",
])
config = GenerationConfig(generator_id="demo-model")

selection = select_evidence(
    claim.claim, claim.veracity, [(p.idx, p.text) for p in claim.evidence],
    transport, config,
)
print("selected evidence:", sorted(selection.indices))

explanation = generate_explanation(claim, selection.indices, "machine", transport, config)
print("explanation:", explanation.raw_text)

# Full setting: one recovery task per cited index.
tasks = build_tasks(claim, explanation, "full", seed=3)
task_scores, task_claims = {}, {}
for task in tasks:
    record = annotate_with_llm(task, transport, config)
    task_scores[task.task_id] = set_prf(record.prediction, task.ground_truth)
    task_claims[task.task_id] = task.claim_id
    print(f"{task.task_id}: predicted {sorted(record.prediction)},"
          f" truth {sorted(task.ground_truth)},"
          f" f1 {task_scores[task.task_id].f1:.4f}")

# Aggregate to per-claim means and the run summary.
report = GroupReport.build(
    annotator_id="llm:demo-model",
    generator_id="demo-model",
    evidence_source="machine",
    task_scores=task_scores,
    task_claims=task_claims,
)
mean, std = report.summary["f1"]
print(f"\nsummary f1: {mean:.4f} +- {std:.4f}")
print(f"claims with every citation recovered above threshold: {report.fully_attributed:.2f}")
