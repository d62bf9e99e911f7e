"""
Masking a citation and recovering it
====================================

The core move of the evaluation: hide one evidence passage's citation
markers inside a generated explanation, then ask an annotator to point at
the sentences that should cite it.  If the citations were placed well, the
annotator lands back on the sentence the marker came from.
"""
from attribeval.citeparse import extract_citation_map, mask_citation, segment_sentences, unmask
from attribeval.corpus import ClaimRecord, EvidencePassage, ExplanationRecord
from attribeval.recovery import build_tasks

# A small fact-checking explanation with one inline citation per sentence.
text = (
    "In 2018, a post about shared photos went viral [9]. "
    "The company never made such a pledge [10]. "
    "Fact checkers debunked the claim as a hoax [11]."
)

# Rule-based segmentation keeps each citation attached to its sentence.
sentences = segment_sentences(text)
print("sentences:")
for pos, span in enumerate(sentences):
    print(f"  {pos}. {span.text}")

cmap = extract_citation_map(sentences)
print("citation map (sentence position -> cited indices):", dict(cmap.entries))

# Mask evidence 10: its marker disappears, everything else stays put.
masked = mask_citation(text, 10, sentences=sentences, citation_map=cmap)
print("\nmasked text:", masked.masked_text)
print("removal log:", masked.removal_log)

# The removal log is a byte-exact undo record.
assert unmask(masked.masked_text, masked.removal_log) == text
print("unmask(masked, log) == original:", True)

# The same machinery packaged as recovery tasks, one per cited index.
claim = ClaimRecord(
    id="demo",
    claim="Sharing a photo triggers one dollar donations.",
    veracity="false",
    evidence=tuple(
        EvidencePassage(i, f"Evidence passage {i} describes the pledge in detail.")
        for i in (9, 10, 11)
    ),
    gold_evidence_sets=(frozenset({9, 10}),),
)
explanation = ExplanationRecord(
    claim_id="demo",
    generator_id="demo-model",
    evidence_source="machine",
    selected_evidence=(9, 10, 11),
    raw_text=text,
    sentences=tuple(sentences),
    citation_map=cmap,
)

tasks = build_tasks(claim, explanation, "full", seed=3)
print(f"\nfull setting builds {len(tasks)} tasks:")
for task in tasks:
    print(f"  {task.task_id}: hide [{task.masked_evidence_idx}],"
          f" correct answer {sorted(task.ground_truth)}")
