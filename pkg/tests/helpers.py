"""Shared builders and stubs for the test suite."""
from __future__ import annotations

import random

from attribeval.citeparse import extract_citation_map, segment_sentences
from attribeval.corpus import ClaimRecord, EvidencePassage, ExplanationRecord
from attribeval.genpipe import TransportError


def make_claim(
    claim_id: str = "c1",
    *,
    claim: str = "Sharing a photo triggers one dollar donations.",
    veracity: str = "false",
    indices: tuple[int, ...] = (9, 10, 11),
    gold: tuple[frozenset[int], ...] | None = None,
) -> ClaimRecord:
    if gold is None:
        gold = (frozenset(indices[:2]) if len(indices) >= 2 else frozenset(indices),)
    return ClaimRecord(
        id=claim_id,
        claim=claim,
        veracity=veracity,
        evidence=tuple(
            EvidencePassage(i, f"Evidence passage {i} describes the pledge in detail.")
            for i in indices
        ),
        gold_evidence_sets=gold,
    )


def make_explanation(
    claim_id: str = "c1",
    text: str | None = None,
    *,
    generator_id: str = "test-model",
    evidence_source: str = "machine",
    selected: tuple[int, ...] = (9, 10, 11),
) -> ExplanationRecord:
    raw = text or (
        "The pledge never existed [9]. The company confirmed no such program [10]. "
        "Checkers labelled the story a hoax [11]."
    )
    sentences = tuple(segment_sentences(raw))
    return ExplanationRecord(
        claim_id=claim_id,
        generator_id=generator_id,
        evidence_source=evidence_source,
        selected_evidence=selected,
        raw_text=raw,
        sentences=sentences,
        citation_map=extract_citation_map(sentences, evidence_universe=selected),
    )


def random_sentence(rng: random.Random, indices: list[int]) -> str:
    """One fuzzed sentence carrying the given citation indices.

    Marker styles rotate between a single index, stacked singletons, a
    comma list, and a marker bound backwards across the closing punctuation.
    """
    words = rng.sample(
        [
            "the", "shares", "posts", "claim", "company", "donate", "hoax",
            "spread", "widely", "report", "stated", "funds", "millions",
            "users", "copied", "listed", "quickly", "online", "2018",
        ],
        k=rng.randint(3, 7),
    )
    words[0] = words[0].capitalize()
    if rng.random() < 0.15:
        words.insert(1, "Dr. Gray")
    body = " ".join(words)
    marker = ""
    if indices:
        style = rng.random()
        if style < 0.4:
            marker = f" [{indices[0]}]"
        elif style < 0.6:
            marker = " " + "".join(f"[{i}]" for i in indices)
        elif style < 0.8:
            sep = rng.choice([",", ", "])
            marker = f" [{sep.join(str(i) for i in indices)}]"
        else:
            # marker lands after the punctuation, binding backwards
            punct = rng.choice([".", "!", "?"])
            return f"{body}{punct} [{indices[0]}]"
    punct = rng.choice([".", ".", ".", "!", "?"])
    return f"{body}{marker}{punct}"


def random_explanation(rng: random.Random) -> tuple[str, list[int]]:
    """A fuzzed multi-sentence explanation and the indices it cites."""
    cited: list[int] = []
    sentences = []
    pool = list(range(13))
    rng.shuffle(pool)
    for _ in range(rng.randint(2, 6)):
        take = rng.choice([0, 1, 1, 1, 2, 3])
        picks = [pool.pop() for _ in range(take) if pool]
        if rng.random() < 0.1 and cited:
            picks.append(rng.choice(cited))  # repeat an index across sentences
        cited.extend(p for p in picks if p not in cited)
        sentences.append(random_sentence(rng, picks))
    return " ".join(sentences), cited


class QueueTransport:
    """Chat transport fed from a reply queue; exceptions in the queue raise."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = []

    def complete(self, messages, params) -> str:
        self.calls.append((list(messages), params))
        if not self.replies:
            raise TransportError("queue exhausted")
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply
