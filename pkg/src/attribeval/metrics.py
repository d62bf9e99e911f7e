"""Set-overlap scores and agreement statistics for citation recovery.

Predictions and references are sets of explanation sentence positions.  All
functions here are pure: no I/O, no hidden state, deterministic for a given
input.  The empty set is a legal value everywhere and follows the conventions
documented on each function.
"""
from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable, Hashable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Scores",
    "set_prf",
    "retrieval_prf",
    "mean_scores",
    "mean_std",
    "fully_attributed_proportion",
    "jaccard_distance",
    "standardize_prediction",
    "union_annotations",
    "krippendorff_alpha",
    "annotation_entropy",
    "recovery_option_counts",
    "GroupReport",
    "ScoreReport",
    "POOLED_ANNOTATOR",
]

# Sentinel standing in for "predicted something outside the reference".
# Negative so it can never collide with a sentence position.
OUT_OF_REFERENCE = -2


@dataclass(frozen=True)
class Scores:
    """Precision, recall and F1 for one prediction/reference pair."""

    precision: float
    recall: float
    f1: float


def set_prf(predicted: frozenset[int] | set[int], reference: frozenset[int] | set[int]) -> Scores:
    """Score a predicted sentence set against a reference sentence set.

    Precision is the fraction of predicted positions that are in the
    reference, recall the fraction of reference positions that were
    predicted, and F1 their harmonic mean.

    Empty-set conventions:
      * both empty: (1.0, 1.0, 1.0), the prediction is exactly right
      * predicted empty, reference not: (0.0, 0.0, 0.0)
      * reference empty, predicted not: (0.0, 0.0, 0.0)
    """
    pred = frozenset(predicted)
    ref = frozenset(reference)
    if not pred and not ref:
        return Scores(1.0, 1.0, 1.0)
    if not pred or not ref:
        return Scores(0.0, 0.0, 0.0)
    overlap = len(pred & ref)
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    if precision + recall == 0.0:
        return Scores(0.0, 0.0, 0.0)
    f1 = 2.0 * precision * recall / (precision + recall)
    return Scores(precision, recall, f1)


def retrieval_prf(
    machine_selected: frozenset[int] | set[int],
    human_selected: frozenset[int] | set[int],
) -> Scores:
    """Score machine evidence selection against the human selection.

    Same arithmetic as set_prf with the human-selected evidence as the
    reference; kept separate because the arguments are evidence indices,
    not sentence positions.
    """
    return set_prf(machine_selected, human_selected)


def mean_scores(scores: Sequence[Scores]) -> Scores:
    """Arithmetic mean of each component over a non-empty score sequence."""
    if not scores:
        raise ValueError("cannot average an empty score sequence")
    n = len(scores)
    return Scores(
        sum(s.precision for s in scores) / n,
        sum(s.recall for s in scores) / n,
        sum(s.f1 for s in scores) / n,
    )


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation of a non-empty sequence."""
    if not values:
        raise ValueError("cannot summarize an empty value sequence")
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def fully_attributed_proportion(
    claim_f1s: Sequence[Sequence[float]],
    threshold: float = 0.6,
    mode: str = "all",
) -> float:
    """Fraction of claims whose citation recovery clears ``threshold``.

    ``claim_f1s`` holds one inner sequence per claim with the per-evidence F1
    scores for that claim.  In ``"all"`` mode a claim counts as fully
    attributed when every per-evidence F1 is >= threshold; in ``"mean"`` mode
    when the mean of its F1 scores is >= threshold.  Claims with no scored
    evidence do not count as attributed.
    """
    if mode not in ("all", "mean"):
        raise ValueError(f"unknown mode {mode!r}, expected 'all' or 'mean'")
    if not claim_f1s:
        raise ValueError("no claims to evaluate")
    hits = 0
    for f1s in claim_f1s:
        if not f1s:
            continue
        if mode == "all":
            ok = all(f1 >= threshold for f1 in f1s)
        else:
            ok = sum(f1s) / len(f1s) >= threshold
        if ok:
            hits += 1
    return hits / len(claim_f1s)


def jaccard_distance(a: frozenset | set, b: frozenset | set) -> float:
    """1 minus Jaccard similarity between two sets; d(empty, empty) is 0."""
    sa, sb = frozenset(a), frozenset(b)
    if not sa and not sb:
        return 0.0
    return 1.0 - len(sa & sb) / len(sa | sb)


def standardize_prediction(
    predicted: frozenset[int] | set[int],
    reference: frozenset[int] | set[int],
    sentinel: int = OUT_OF_REFERENCE,
) -> frozenset[int]:
    """Collapse all out-of-reference picks into a single sentinel element.

    The result keeps the correctly recovered positions and represents any
    amount of spurious material by one shared sentinel, so that two
    annotators who are both wrong in different ways still land on the same
    value.  An empty prediction stays empty.
    """
    pred = frozenset(predicted)
    ref = frozenset(reference)
    kept = pred & ref
    if pred - ref:
        kept = kept | {sentinel}
    return kept


def union_annotations(annotations: Sequence[frozenset[int] | set[int]]) -> frozenset[int]:
    """Pool several annotators' sentence sets into their union."""
    pooled: frozenset[int] = frozenset()
    for ann in annotations:
        pooled = pooled | frozenset(ann)
    return pooled


def krippendorff_alpha(
    units: Mapping[Hashable, Sequence],
    distance: Callable = jaccard_distance,
) -> float:
    """Krippendorff's alpha over arbitrary values with a pluggable metric.

    ``units`` maps a unit id to the sequence of values assigned to that unit;
    values may come from any mix of annotators.  Units carrying fewer than
    two values cannot witness agreement and are ignored.  The distance
    callable must be symmetric and zero on identical values.

    Observed disagreement averages the pairwise distances inside each unit,
    expected disagreement averages them over all value pairs pooled across
    units.  Perfect agreement yields exactly 1.0.  When the pooled values
    admit no variation at all (expected disagreement zero) the data is
    degenerate: alpha is 1.0 if observed disagreement is also zero and a
    ValueError otherwise.
    """
    pairable = [list(values) for values in units.values() if len(values) >= 2]
    if not pairable:
        raise ValueError("no unit has two or more values, alpha is undefined")

    n = sum(len(values) for values in pairable)
    observed = 0.0
    for values in pairable:
        within = 0.0
        for i, vi in enumerate(values):
            for j, vj in enumerate(values):
                if i != j:
                    within += distance(vi, vj)
        observed += within / (len(values) - 1)
    observed /= n

    pooled = [v for values in pairable for v in values]
    expected = 0.0
    for i, vi in enumerate(pooled):
        for j, vj in enumerate(pooled):
            if i != j:
                expected += distance(vi, vj)
    expected /= n * (n - 1)

    if expected == 0.0:
        if observed == 0.0:
            return 1.0
        raise ValueError("expected disagreement is zero but observed is not")
    return 1.0 - observed / expected


def annotation_entropy(option_counts: Sequence[int], normalized: bool = False) -> float:
    """Shannon entropy (natural log) of an annotation count vector.

    ``option_counts`` holds, per answer option, how many annotations picked
    that option.  Counts are normalized to a distribution first; zero counts
    contribute nothing (0 ln 0 is taken as 0).  With ``normalized`` the
    entropy is divided by ln(number of options), mapping it onto [0, 1];
    a single-option vector has no room for uncertainty and yields 0.0.
    """
    if any(c < 0 for c in option_counts):
        raise ValueError("option counts must be non-negative")
    total = sum(option_counts)
    if total == 0:
        raise ValueError("all option counts are zero, entropy is undefined")
    entropy = 0.0
    for count in option_counts:
        if count > 0:
            p = count / total
            entropy -= p * math.log(p)
    if normalized:
        if len(option_counts) < 2:
            return 0.0
        return entropy / math.log(len(option_counts))
    return entropy


def recovery_option_counts(
    predictions: Sequence[frozenset[int] | set[int]], n_sentences: int
) -> list[int]:
    """Tally annotation choices into an option count vector for entropy.

    One option per sentence position plus a final bucket for the explicit
    "no sentence" answer; each annotator increments every position they
    selected, or the none bucket when their prediction is empty.
    """
    if n_sentences < 0:
        raise ValueError("sentence count must be non-negative")
    counts = [0] * (n_sentences + 1)
    for prediction in predictions:
        if not prediction:
            counts[-1] += 1
            continue
        for position in prediction:
            if not 0 <= position < n_sentences:
                raise ValueError(f"prediction position {position} outside 0..{n_sentences - 1}")
            counts[position] += 1
    return counts


def _scores_dict(scores: Scores) -> dict:
    return {"precision": scores.precision, "recall": scores.recall, "f1": scores.f1}


@dataclass(frozen=True)
class GroupReport:
    """Attribution results for one annotator over one generator's output."""

    annotator_id: str
    generator_id: str
    evidence_source: str
    per_task: Mapping[str, Scores]
    per_claim: Mapping[str, Scores]
    summary: Mapping[str, tuple[float, float]]
    fully_attributed: float
    parse_failures: int

    @classmethod
    def build(
        cls,
        annotator_id: str,
        generator_id: str,
        evidence_source: str,
        task_scores: Mapping[str, Scores],
        task_claims: Mapping[str, str],
        threshold: float = 0.6,
        mode: str = "all",
        parse_failures: int = 0,
    ) -> "GroupReport":
        """Aggregate per-task scores into per-claim means and run summaries.

        Claims are scored as the mean over their tasks; the run summary is
        mean and population std of each component over claims, matching how
        multi-evidence claims are reported.
        """
        if not task_scores:
            raise ValueError("cannot build a report group without task scores")
        by_claim: dict[str, list[Scores]] = {}
        for task_id, scores in task_scores.items():
            by_claim.setdefault(task_claims[task_id], []).append(scores)
        per_claim = {claim: mean_scores(scores) for claim, scores in by_claim.items()}
        summary = {
            component: mean_std([getattr(s, component) for s in per_claim.values()])
            for component in ("precision", "recall", "f1")
        }
        proportion = fully_attributed_proportion(
            [[s.f1 for s in scores] for scores in by_claim.values()],
            threshold=threshold,
            mode=mode,
        )
        return cls(
            annotator_id=annotator_id,
            generator_id=generator_id,
            evidence_source=evidence_source,
            per_task=dict(sorted(task_scores.items())),
            per_claim=dict(sorted(per_claim.items())),
            summary=summary,
            fully_attributed=proportion,
            parse_failures=parse_failures,
        )

    def to_dict(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "generator_id": self.generator_id,
            "evidence_source": self.evidence_source,
            "per_task": {t: _scores_dict(s) for t, s in sorted(self.per_task.items())},
            "per_claim": {c: _scores_dict(s) for c, s in sorted(self.per_claim.items())},
            "summary": {
                component: {"mean": mean, "std": std}
                for component, (mean, std) in sorted(self.summary.items())
            },
            "fully_attributed": self.fully_attributed,
            "parse_failures": self.parse_failures,
            "n_tasks": len(self.per_task),
            "n_claims": len(self.per_claim),
        }

    def flat_rows(self) -> list[tuple[str, str, str, str, float]]:
        key = (self.annotator_id, self.generator_id, self.evidence_source)
        rows = []
        for component in ("precision", "recall", "f1"):
            mean, std = self.summary[component]
            rows.append((*key, f"{component}_mean", mean))
            rows.append((*key, f"{component}_std", std))
        rows.append((*key, "fully_attributed", self.fully_attributed))
        rows.append((*key, "n_tasks", float(len(self.per_task))))
        rows.append((*key, "n_claims", float(len(self.per_claim))))
        rows.append((*key, "parse_failures", float(self.parse_failures)))
        return rows


POOLED_ANNOTATOR = "human:pooled"


@dataclass(frozen=True)
class ScoreReport:
    """Full evaluation report for one run: attribution per annotator,
    human agreement, annotation entropy and calibrated utilities."""

    run_id: str
    seed: int
    setting: str
    evidence_source: str
    threshold: float
    mode: str
    groups: tuple[GroupReport, ...]
    agreement_alpha: float | None = None
    entropy_per_task: Mapping[str, float] | None = None
    entropy_per_claim: Mapping[str, float] | None = None
    calibration: Mapping | None = None

    def entropy_summary(self) -> tuple[float, float] | None:
        if not self.entropy_per_claim:
            return None
        return mean_std(list(self.entropy_per_claim.values()))

    def to_dict(self) -> dict:
        entropy = None
        if self.entropy_per_claim:
            mean, std = self.entropy_summary()
            entropy = {
                "per_task": dict(sorted(self.entropy_per_task.items())),
                "per_claim": dict(sorted(self.entropy_per_claim.items())),
                "mean": mean,
                "std": std,
                "mean_bits": mean / math.log(2.0),
            }
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "setting": self.setting,
            "evidence_source": self.evidence_source,
            "threshold": self.threshold,
            "mode": self.mode,
            "groups": [g.to_dict() for g in self.groups],
            "agreement_alpha": self.agreement_alpha,
            "entropy": entropy,
            "calibration": dict(self.calibration) if self.calibration else None,
        }

    def flat_rows(self) -> list[tuple[str, str, str, str, float]]:
        rows = []
        for group in self.groups:
            rows.extend(group.flat_rows())
        generators = sorted({g.generator_id for g in self.groups})
        pooled_generator = generators[0] if len(generators) == 1 else "all"
        pooled = (POOLED_ANNOTATOR, pooled_generator, self.evidence_source)
        if self.agreement_alpha is not None:
            rows.append((*pooled, "agreement_alpha", self.agreement_alpha))
        summary = self.entropy_summary()
        if summary is not None:
            mean, std = summary
            rows.append((*pooled, "entropy_mean", mean))
            rows.append((*pooled, "entropy_std", std))
            rows.append((*pooled, "entropy_mean_bits", mean / math.log(2.0)))
        if self.calibration:
            utilities = [mean for mean, _ in self.calibration["items"].values()]
            if utilities:
                rows.append(
                    (*pooled, "calibrated_utility_mean", float(np.mean(utilities)))
                )
            for annotator_id, (shape, rate) in sorted(self.calibration["annotators"].items()):
                rows.append(
                    (annotator_id, pooled_generator, self.evidence_source,
                     "calibrated_tau_mean", shape / rate)
                )
        return rows

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["annotator", "generator", "evidence_source", "metric", "value"])
        for annotator, generator, source, metric, value in self.flat_rows():
            writer.writerow([annotator, generator, source, metric, str(value)])
        return buffer.getvalue()
