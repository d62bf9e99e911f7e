"""Sentence segmentation and inline citation handling for explanations.

An explanation cites evidence passages with bracketed markers: ``[3]``, an
adjacent chain ``[1][2]`` or a comma list ``[1,2]``.  This module segments
explanation text into sentences, maps markers to sentences, and removes all
markers for one evidence index while recording every deletion so the edit
can be undone byte for byte.
"""
from __future__ import annotations

import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

__all__ = [
    "SentenceSpan",
    "CitationMap",
    "MaskedExplanation",
    "ValidationIssue",
    "MARKER_RE",
    "segment_sentences",
    "extract_citation_map",
    "mask_citation",
    "unmask",
    "validate_citations",
]

# One citation marker: digits only, optionally a comma list, spaces allowed
# around each number.  Adjacent chains are consecutive matches.
MARKER_RE = re.compile(r"\[\s*\d+(?:\s*,\s*\d+)*\s*\]")

_TERMINALS = ".!?"
_CLOSING_QUOTES = "\"'”’)"
_OPENERS = "\"'“‘("
_URL_RE = re.compile(r"https?://\S+|www\.\S+")

# Tokens that end with a period without ending the sentence.  Single letters
# (initials, dotted acronyms like U.S.) are blocked by a separate rule.
_ABBREVIATIONS = frozenset(
    """Mr Mrs Ms Dr Prof Rev Hon Gen Sen Rep Gov Capt Sgt Col Lt Maj
    St Ave Blvd Jr Sr Inc Ltd Co Corp Dept Univ
    vs etc al ca cf eg ie approx est Fig fig No Nos vol Vol pp
    Jan Feb Mar Apr Jun Jul Aug Sep Sept Oct Nov Dec""".split()
)


@dataclass(frozen=True)
class SentenceSpan:
    """One sentence with its character span in the source text."""

    text: str
    start: int
    end: int


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    message: str
    sentence: int | None = None
    evidence_idx: int | None = None


@dataclass(frozen=True)
class CitationMap:
    """Which sentences cite which evidence indices, plus marker locations.

    ``entries`` maps sentence position to the cited indices in order of
    appearance with duplicates dropped; sentences citing nothing have no
    entry.  ``marker_spans`` locates, for each (sentence, index) pair, the
    first marker carrying that index.  Indices outside the evidence universe
    are kept in ``entries`` and listed in ``out_of_universe``.
    """

    entries: dict[int, tuple[int, ...]] = field(default_factory=dict)
    marker_spans: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)
    out_of_universe: frozenset[int] = frozenset()

    def cited_indices(self) -> frozenset[int]:
        return frozenset(idx for cited in self.entries.values() for idx in cited)

    def sentences_citing(self, evidence_idx: int) -> frozenset[int]:
        return frozenset(pos for pos, cited in self.entries.items() if evidence_idx in cited)


@dataclass(frozen=True)
class MaskedExplanation:
    """Result of removing one evidence index's markers from an explanation.

    ``removal_log`` lists sequential deletions as (position, removed text)
    where the position is valid in the text as it stood when that deletion
    was applied.  Replaying the log backwards with ``unmask`` reproduces the
    original text exactly.
    """

    original_text: str
    masked_text: str
    masked_evidence_idx: int
    masked_sentences: tuple[str, ...]
    ground_truth: frozenset[int]
    removal_log: tuple[tuple[int, str], ...]


def _parse_marker(marker_text: str) -> list[int]:
    return [int(tok) for tok in re.findall(r"\d+", marker_text)]


def _preceding_token(text: str, pos: int) -> str:
    m = re.search(r"([A-Za-z][\w/-]*)\Z", text[:pos])
    return m.group(1) if m else ""


def segment_sentences(text: str) -> list[SentenceSpan]:
    """Split explanation text into sentences with character spans.

    A sentence break requires terminal punctuation, then whitespace, then an
    uppercase letter, digit or opening quote.  Closing quotes and citation
    markers directly after the punctuation stay with the preceding sentence.
    Periods after known abbreviations or single letters never break, and a
    break never lands inside a citation marker.  Spans cover the text minus
    surrounding whitespace, so joining the spans with the skipped whitespace
    reproduces the input.
    """
    marker_regions = [m.span() for m in MARKER_RE.finditer(text)]

    def inside_marker(pos: int) -> bool:
        return any(s <= pos < e for s, e in marker_regions)

    breaks: list[tuple[int, int]] = []  # (end of sentence, start of next)
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch not in _TERMINALS or inside_marker(i):
            i += 1
            continue
        j = i + 1
        while j < n and text[j] in _CLOSING_QUOTES:
            j += 1
        # markers after the punctuation bind to the sentence just closed
        while True:
            k = j
            if k < n and text[k] == " ":
                k += 1
            m = MARKER_RE.match(text, k)
            if m is None:
                break
            j = m.end()
        w = j
        while w < n and text[w].isspace():
            w += 1
        if w == j or w == n:
            i = j
            continue
        nxt = text[w]
        if not (nxt.isupper() or nxt.isdigit() or nxt in _OPENERS):
            i = j
            continue
        if ch == ".":
            token = _preceding_token(text, i)
            if token in _ABBREVIATIONS or len(token) == 1:
                i = j
                continue
        breaks.append((j, w))
        i = w

    spans: list[SentenceSpan] = []
    cursor = 0
    for end, nxt in breaks + [(n, n)]:
        start = cursor
        while start < end and text[start].isspace():
            start += 1
        stop = end
        while stop > start and text[stop - 1].isspace():
            stop -= 1
        if stop > start:
            spans.append(SentenceSpan(text[start:stop], start, stop))
        cursor = nxt
    return spans


def extract_citation_map(
    sentences: Sequence[SentenceSpan],
    evidence_universe: Iterable[int] | None = None,
) -> CitationMap:
    """Map each sentence to the evidence indices its markers cite.

    Indices keep their order of first appearance within a sentence and are
    deduplicated.  With an ``evidence_universe`` given, indices outside it
    are still recorded but flagged in ``out_of_universe``.
    """
    universe = frozenset(evidence_universe) if evidence_universe is not None else None
    entries: dict[int, tuple[int, ...]] = {}
    marker_spans: dict[tuple[int, int], tuple[int, int]] = {}
    stray: set[int] = set()
    for pos, sentence in enumerate(sentences):
        seen: list[int] = []
        for m in MARKER_RE.finditer(sentence.text):
            span = (sentence.start + m.start(), sentence.start + m.end())
            for idx in _parse_marker(m.group()):
                if idx not in seen:
                    seen.append(idx)
                    marker_spans[(pos, idx)] = span
                if universe is not None and idx not in universe:
                    stray.add(idx)
        if seen:
            entries[pos] = tuple(seen)
    return CitationMap(entries=entries, marker_spans=marker_spans, out_of_universe=frozenset(stray))


def _shift(x: int, d0: int, d1: int) -> int:
    """New position of offset x after deleting [d0, d1)."""
    return x - (min(x, d1) - min(x, d0))


class _Masker:
    """Working state for one masking pass: text plus sentence boundaries."""

    def __init__(self, text: str, sentences: Sequence[SentenceSpan]):
        self.text = text
        self.bounds = [[s.start, s.end] for s in sentences]
        self.log: list[tuple[int, str]] = []

    def delete(self, d0: int, d1: int) -> None:
        if d0 >= d1:
            return
        self.log.append((d0, self.text[d0:d1]))
        self.text = self.text[:d0] + self.text[d1:]
        for b in self.bounds:
            b[0] = _shift(b[0], d0, d1)
            b[1] = _shift(b[1], d0, d1)

    def repair_whitespace(self, p: int) -> None:
        """Clean up around a join point p left behind by a marker deletion.

        Only deletes characters, and only spaces or tabs adjacent to p:
        runs collapse to a single space, spaces vanish before punctuation,
        at line ends and at both ends of the text.
        """
        text = self.text
        left = p
        while left > 0 and text[left - 1] in " \t":
            left -= 1
        right = p
        while right < len(text) and text[right] in " \t":
            right += 1
        if left == right:
            return
        if right == len(text) or left == 0:
            self.delete(left, right)
        elif text[right] in ".,;:!?" or text[right] == "\n":
            self.delete(left, right)
        elif right - left >= 2:
            # keep the rightmost space: when the run straddles a sentence
            # boundary that space is the gap between sentences
            self.delete(left, right - 1)


def mask_citation(
    raw_text: str,
    evidence_idx: int,
    sentences: Sequence[SentenceSpan] | None = None,
    citation_map: CitationMap | None = None,
) -> MaskedExplanation:
    """Remove every marker citing ``evidence_idx`` and log the deletions.

    Singleton markers vanish whole, including whitespace repair around the
    hole; in comma lists only the target number and one adjoining comma go.
    Other markers, sentence count and sentence order are untouched, and the
    ground truth records which sentences cited the removed index.  Raises
    ValueError when the index is not cited anywhere.
    """
    if sentences is None:
        sentences = segment_sentences(raw_text)
    if citation_map is None:
        citation_map = extract_citation_map(sentences)
    ground_truth = citation_map.sentences_citing(evidence_idx)
    if not ground_truth:
        raise ValueError(f"evidence index {evidence_idx} is cited by no sentence")

    state = _Masker(raw_text, sentences)
    while True:
        hit = None
        for m in MARKER_RE.finditer(state.text):
            if evidence_idx in _parse_marker(m.group()):
                hit = m
                break
        if hit is None:
            break
        tokens = list(re.finditer(r"\d+", hit.group()))
        if len(tokens) == 1:
            state.delete(hit.start(), hit.end())
            state.repair_whitespace(hit.start())
        else:
            target_pos = next(
                i for i, t in enumerate(tokens) if int(t.group()) == evidence_idx
            )
            target = tokens[target_pos]
            if target_pos == len(tokens) - 1:
                d0 = hit.start() + tokens[target_pos - 1].end()
                d1 = hit.start() + target.end()
            else:
                d0 = hit.start() + target.start()
                d1 = hit.start() + tokens[target_pos + 1].start()
            state.delete(d0, d1)

    masked_sentences = tuple(state.text[b0:b1] for b0, b1 in state.bounds)
    return MaskedExplanation(
        original_text=raw_text,
        masked_text=state.text,
        masked_evidence_idx=evidence_idx,
        masked_sentences=masked_sentences,
        ground_truth=ground_truth,
        removal_log=tuple(state.log),
    )


def unmask(masked_text: str, removal_log: Sequence[tuple[int, str]]) -> str:
    """Replay a removal log backwards, reinserting every deleted substring."""
    text = masked_text
    for pos, removed in reversed(removal_log):
        text = text[:pos] + removed + text[pos:]
    return text


def validate_citations(
    citation_map: CitationMap,
    evidence_universe: Iterable[int],
    sentences: Sequence[SentenceSpan] | None = None,
) -> list[ValidationIssue]:
    """Lint a citation map against the evidence it was allowed to cite.

    Reports indices outside the universe, evidence never cited, indices
    cited by more than one sentence (the generation prompt forbids reuse),
    and, when sentence texts are provided, raw URL tokens that leaked into
    the explanation.
    """
    universe = frozenset(evidence_universe)
    issues: list[ValidationIssue] = []
    for pos, cited in sorted(citation_map.entries.items()):
        for idx in cited:
            if idx not in universe:
                issues.append(
                    ValidationIssue(
                        kind="out_of_universe",
                        message=f"sentence {pos} cites [{idx}] which is not in the evidence set",
                        sentence=pos,
                        evidence_idx=idx,
                    )
                )
    cited_anywhere = citation_map.cited_indices()
    for idx in sorted(universe - cited_anywhere):
        issues.append(
            ValidationIssue(
                kind="uncited_evidence",
                message=f"evidence [{idx}] is never cited",
                evidence_idx=idx,
            )
        )
    for idx in sorted(cited_anywhere):
        citing = citation_map.sentences_citing(idx)
        if len(citing) > 1:
            issues.append(
                ValidationIssue(
                    kind="repeated_citation",
                    message=f"evidence [{idx}] is cited by sentences {sorted(citing)}",
                    evidence_idx=idx,
                )
            )
    if sentences is not None:
        for pos, sentence in enumerate(sentences):
            if _URL_RE.search(sentence.text):
                issues.append(
                    ValidationIssue(
                        kind="url_token",
                        message=f"sentence {pos} contains a raw URL",
                        sentence=pos,
                    )
                )
    return issues
