"""
Scoring recovered citations and measuring agreement
===================================================

Recovery answers are sentence sets, so scoring is set precision/recall/F1
against the hidden ground truth, agreement is Krippendorff's alpha under
Jaccard distance, and answer spread is Shannon entropy over the selectable
options.
"""
import math

from attribeval.metrics import (
    annotation_entropy,
    krippendorff_alpha,
    recovery_option_counts,
    set_prf,
    standardize_prediction,
    union_annotations,
)

# A task whose correct answer is sentence 9; one annotator adds sentence 7.
scores = set_prf({7, 9}, {9})
print(f"predict {{7,9}} against {{9}}: precision {scores.precision},"
      f" recall {scores.recall}, f1 {scores.f1:.4f}")

# For agreement we standardize first: correct picks survive, any amount of
# out-of-reference material collapses into one shared sentinel.  Two
# annotators who are wrong in different ways still land on the same value.
print("standardize({7,9} vs {9}):", set(standardize_prediction({7, 9}, {9})))
print("standardize({3,9} vs {9}):", set(standardize_prediction({3, 9}, {9})))

# Three annotators over four tasks.  Unit values are the annotation sets.
units = {
    "t1": [frozenset({0}), frozenset({0}), frozenset({0, 1})],
    "t2": [frozenset(), frozenset(), frozenset()],
    "t3": [frozenset({2}), frozenset({1}), frozenset({2})],
    "t4": [frozenset({1}), frozenset({1})],
}
alpha = krippendorff_alpha(units)
print(f"\nKrippendorff's alpha over {len(units)} tasks: {alpha:.4f}")

# Pooling annotators is just the union of their sets.
pooled = union_annotations([frozenset({0}), frozenset({0, 1}), frozenset({2})])
print("union of {0}, {0,1}, {2}:", set(pooled))

# Entropy over the answer options: each annotator increments the positions
# they picked, or the trailing none-bucket for an empty answer.
counts = recovery_option_counts(
    [frozenset({0}), frozenset({0}), frozenset({1}), frozenset()], n_sentences=3
)
print(f"\noption counts (3 sentences + none): {counts}")
print(f"entropy: {annotation_entropy(counts):.4f} nats"
      f" = {annotation_entropy(counts) / math.log(2):.4f} bits")

unanimous = recovery_option_counts([frozenset({2})] * 4, n_sentences=3)
print(f"unanimous counts {unanimous} -> entropy {annotation_entropy(unanimous)}")
