"""Claim and explanation records plus corpus loading and statistics.

A corpus is a JSON-lines file of claims.  Each claim carries indexed
evidence passages and optionally one or more gold evidence subsets that a
selection stage may be compared against.
"""
from __future__ import annotations

import hashlib
import json
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .citeparse import CitationMap, SentenceSpan, ValidationIssue

__all__ = [
    "CorpusError",
    "EvidencePassage",
    "ClaimRecord",
    "ExplanationRecord",
    "load_corpus",
    "write_corpus",
    "choose_gold_subset",
    "corpus_stats",
    "StatsReport",
    "GroupStats",
]


class CorpusError(Exception):
    """Raised when a corpus file fails validation; names the bad line."""


@dataclass(frozen=True)
class EvidencePassage:
    idx: int
    text: str


@dataclass(frozen=True)
class ClaimRecord:
    """One fact-checking claim with its indexed evidence passages.

    ``gold_evidence_sets`` lists alternative evidence subsets that would
    each justify the veracity on their own; it may be empty when no gold
    annotation exists.
    """

    id: str
    claim: str
    veracity: str
    evidence: tuple[EvidencePassage, ...]
    gold_evidence_sets: tuple[frozenset[int], ...] = ()

    def evidence_universe(self) -> frozenset[int]:
        return frozenset(p.idx for p in self.evidence)

    def evidence_text(self, idx: int) -> str:
        for passage in self.evidence:
            if passage.idx == idx:
                return passage.text
        raise KeyError(f"claim {self.id} has no evidence passage [{idx}]")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "claim": self.claim,
            "veracity": self.veracity,
            "evidence": [{"idx": p.idx, "text": p.text} for p in self.evidence],
            "gold_evidence_sets": [sorted(s) for s in self.gold_evidence_sets],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClaimRecord":
        for key in ("id", "claim", "veracity", "evidence"):
            if key not in data:
                raise ValueError(f"missing required field {key!r}")
        if not str(data["claim"]).strip():
            raise ValueError("claim text is empty")
        evidence = []
        seen_idx: set[int] = set()
        for item in data["evidence"]:
            idx = item["idx"]
            if not isinstance(idx, int):
                raise ValueError(f"evidence idx {idx!r} is not an integer")
            if idx in seen_idx:
                raise ValueError(f"duplicate evidence idx {idx}")
            if not str(item["text"]).strip():
                raise ValueError(f"evidence passage [{idx}] is empty")
            seen_idx.add(idx)
            evidence.append(EvidencePassage(idx=idx, text=item["text"]))
        gold = []
        for subset in data.get("gold_evidence_sets", []):
            chosen = frozenset(subset)
            if not chosen <= seen_idx:
                stray = sorted(chosen - seen_idx)
                raise ValueError(f"gold subset references unknown evidence {stray}")
            gold.append(chosen)
        return cls(
            id=str(data["id"]),
            claim=data["claim"],
            veracity=str(data["veracity"]),
            evidence=tuple(evidence),
            gold_evidence_sets=tuple(gold),
        )


@dataclass(frozen=True)
class ExplanationRecord:
    """A generated explanation with its parsed sentences and citations.

    ``evidence_source`` says where the selected evidence came from: "human"
    for gold subsets, "machine" for model selection.  Sentences keep their
    source spans, so joining them with the whitespace between spans
    reproduces ``raw_text`` exactly.
    """

    claim_id: str
    generator_id: str
    evidence_source: str
    selected_evidence: tuple[int, ...]
    raw_text: str
    sentences: tuple[SentenceSpan, ...]
    citation_map: CitationMap
    validation_issues: tuple[ValidationIssue, ...] = ()

    def __post_init__(self) -> None:
        if self.evidence_source not in ("human", "machine"):
            raise ValueError(
                f"evidence_source must be 'human' or 'machine', got {self.evidence_source!r}"
            )

    def sentence_texts(self) -> tuple[str, ...]:
        return tuple(s.text for s in self.sentences)

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "generator_id": self.generator_id,
            "evidence_source": self.evidence_source,
            "selected_evidence": list(self.selected_evidence),
            "raw_text": self.raw_text,
            "sentences": [[s.text, s.start, s.end] for s in self.sentences],
            "citation_map": {
                "entries": {str(k): list(v) for k, v in sorted(self.citation_map.entries.items())},
                "marker_spans": [
                    [pos, idx, a, b]
                    for (pos, idx), (a, b) in sorted(self.citation_map.marker_spans.items())
                ],
                "out_of_universe": sorted(self.citation_map.out_of_universe),
            },
            "validation_issues": [
                {
                    "kind": i.kind,
                    "message": i.message,
                    "sentence": i.sentence,
                    "evidence_idx": i.evidence_idx,
                }
                for i in self.validation_issues
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExplanationRecord":
        cmap_data = data["citation_map"]
        cmap = CitationMap(
            entries={int(k): tuple(v) for k, v in cmap_data["entries"].items()},
            marker_spans={
                (pos, idx): (a, b) for pos, idx, a, b in cmap_data["marker_spans"]
            },
            out_of_universe=frozenset(cmap_data["out_of_universe"]),
        )
        return cls(
            claim_id=data["claim_id"],
            generator_id=data["generator_id"],
            evidence_source=data["evidence_source"],
            selected_evidence=tuple(data["selected_evidence"]),
            raw_text=data["raw_text"],
            sentences=tuple(SentenceSpan(t, a, b) for t, a, b in data["sentences"]),
            citation_map=cmap,
            validation_issues=tuple(
                ValidationIssue(
                    kind=i["kind"],
                    message=i["message"],
                    sentence=i.get("sentence"),
                    evidence_idx=i.get("evidence_idx"),
                )
                for i in data.get("validation_issues", [])
            ),
        )


def load_corpus(path: str | Path) -> list[ClaimRecord]:
    """Read a JSON-lines corpus, validating every record.

    Raises CorpusError naming the first offending line on malformed JSON,
    schema violations or duplicate claim ids.
    """
    path = Path(path)
    records: list[ClaimRecord] = []
    seen_ids: dict[str, int] = {}
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name}:{lineno}: invalid JSON ({exc.msg})") from exc
            try:
                record = ClaimRecord.from_dict(data)
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path.name}:{lineno}: {exc}") from exc
            if record.id in seen_ids:
                raise CorpusError(
                    f"{path.name}:{lineno}: duplicate claim id {record.id!r}"
                    f" (first seen on line {seen_ids[record.id]})"
                )
            seen_ids[record.id] = lineno
            records.append(record)
    return records


def write_corpus(path: str | Path, records: Iterable[ClaimRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False))
            handle.write("\n")


def choose_gold_subset(record: ClaimRecord, seed: int) -> frozenset[int]:
    """Pick one gold evidence subset, stable across processes for a seed.

    The choice hashes the claim id together with the seed, so reordering the
    corpus or rerunning in a new interpreter cannot change it.  Raises
    ValueError when the claim has no gold subsets.
    """
    if not record.gold_evidence_sets:
        raise ValueError(f"claim {record.id} has no gold evidence sets")
    digest = hashlib.sha256(f"{record.id}|{seed}|gold".encode("utf-8")).digest()
    pick = int.from_bytes(digest[:8], "big") % len(record.gold_evidence_sets)
    return record.gold_evidence_sets[pick]


def _whitespace_tokens(text: str) -> list[str]:
    return text.split()


@dataclass(frozen=True)
class GroupStats:
    evidence_source: str
    generator_id: str
    n_explanations: int
    mean_claim_tokens: float
    mean_selected_evidence: float
    mean_explanation_tokens: float


@dataclass(frozen=True)
class StatsReport:
    n_claims: int
    mean_claim_tokens: float
    mean_evidence_passages: float
    groups: tuple[GroupStats, ...] = ()

    def to_dict(self) -> dict:
        return {
            "n_claims": self.n_claims,
            "mean_claim_tokens": self.mean_claim_tokens,
            "mean_evidence_passages": self.mean_evidence_passages,
            "groups": [
                {
                    "evidence_source": g.evidence_source,
                    "generator_id": g.generator_id,
                    "n_explanations": g.n_explanations,
                    "mean_claim_tokens": g.mean_claim_tokens,
                    "mean_selected_evidence": g.mean_selected_evidence,
                    "mean_explanation_tokens": g.mean_explanation_tokens,
                }
                for g in self.groups
            ],
        }


def corpus_stats(
    records: Sequence[ClaimRecord],
    explanations: Sequence[ExplanationRecord] = (),
    tokenizer: Callable[[str], list[str]] | None = None,
) -> StatsReport:
    """Describe a corpus and its explanations with simple means.

    Token counts use whitespace splitting unless a tokenizer is injected.
    Explanation statistics are grouped by (evidence_source, generator_id);
    with no explanations the report carries claim statistics only.
    """
    if not records:
        raise ValueError("corpus is empty")
    tokenize = tokenizer or _whitespace_tokens
    claim_tokens = {r.id: len(tokenize(r.claim)) for r in records}
    mean_claim = sum(claim_tokens.values()) / len(records)
    mean_passages = sum(len(r.evidence) for r in records) / len(records)

    grouped: dict[tuple[str, str], list[ExplanationRecord]] = {}
    for exp in explanations:
        grouped.setdefault((exp.evidence_source, exp.generator_id), []).append(exp)
    groups = []
    for (source, generator), members in sorted(grouped.items()):
        n = len(members)
        known = [e for e in members if e.claim_id in claim_tokens]
        groups.append(
            GroupStats(
                evidence_source=source,
                generator_id=generator,
                n_explanations=n,
                mean_claim_tokens=(
                    sum(claim_tokens[e.claim_id] for e in known) / len(known) if known else 0.0
                ),
                mean_selected_evidence=sum(len(e.selected_evidence) for e in members) / n,
                mean_explanation_tokens=sum(len(tokenize(e.raw_text)) for e in members) / n,
            )
        )
    return StatsReport(
        n_claims=len(records),
        mean_claim_tokens=mean_claim,
        mean_evidence_passages=mean_passages,
        groups=tuple(groups),
    )
