"""Tests for sentence segmentation, citation extraction and masking.

The masking fuzz test is the load-bearing check: across randomized
explanations the removal log must reproduce the original bytes exactly and
re-extraction must equal the original citation map minus the masked index.
"""
from __future__ import annotations

import random

import pytest

from attribeval.citeparse import (
    MARKER_RE,
    extract_citation_map,
    mask_citation,
    segment_sentences,
    unmask,
    validate_citations,
)
from helpers import random_explanation

EXPLANATION = (
    "In 2018, a post about shared photos went viral [9]. "
    "The company never made such a pledge [10]. "
    "Fact checkers debunked the claim as a hoax [11]."
)


def test_segment_basic_three_sentences() -> None:
    spans = segment_sentences(EXPLANATION)
    assert len(spans) == 3
    assert spans[0].text.endswith("[9].")
    assert spans[1].text.startswith("The company")
    assert spans[2].text.endswith("[11].")
    for s in spans:
        assert EXPLANATION[s.start : s.end] == s.text


def test_segment_abbreviations_and_decimals() -> None:
    text = "The U.S. debt rose sharply [3]. Dr. Smith disagreed with No. 5."
    spans = segment_sentences(text)
    assert [s.text for s in spans] == [
        "The U.S. debt rose sharply [3].",
        "Dr. Smith disagreed with No. 5.",
    ]
    assert len(segment_sentences("It grew 3.5 percent in 2019.")) == 1


def test_segment_marker_binds_to_preceding_sentence() -> None:
    text = "It is false. [9] Posts spread quickly [10]. Done."
    spans = segment_sentences(text)
    assert [s.text for s in spans] == [
        "It is false. [9]",
        "Posts spread quickly [10].",
        "Done.",
    ]
    cmap = extract_citation_map(spans)
    assert cmap.entries == {0: (9,), 1: (10,)}


def test_segment_never_splits_inside_marker_or_without_cue() -> None:
    spans = segment_sentences("Results follow. see below for more.")
    assert len(spans) == 1
    # exclamation and question marks break without abbreviation checks
    spans = segment_sentences("Really?! Yes. It works!")
    assert len(spans) >= 2


def test_segment_idempotent_on_extracted_sentences() -> None:
    for sentence in segment_sentences(EXPLANATION):
        again = segment_sentences(sentence.text)
        assert len(again) == 1
        assert again[0].text == sentence.text


def test_segment_span_partition() -> None:
    text = "  Leading space. Then more text.  "
    spans = segment_sentences(text)
    rebuilt = "".join(
        text[prev.end : cur.start] + cur.text
        for prev, cur in zip(
            [type(spans[0])("", 0, spans[0].start)] + list(spans[:-1]), spans
        )
    )
    assert rebuilt.strip() == text.strip()


def test_extract_citation_map_orders_and_dedupes() -> None:
    text = "Both reports agree [4][2]. The list repeats [2, 2, 7]."
    spans = segment_sentences(text)
    cmap = extract_citation_map(spans, evidence_universe={2, 4, 7, 9})
    assert cmap.entries == {0: (4, 2), 1: (2, 7)}
    assert cmap.out_of_universe == frozenset()
    assert cmap.cited_indices() == frozenset({2, 4, 7})
    assert cmap.sentences_citing(2) == frozenset({0, 1})
    for (pos, idx), (a, b) in cmap.marker_spans.items():
        assert str(idx) in text[a:b]
        assert MARKER_RE.fullmatch(text[a:b])


def test_extract_flags_out_of_universe() -> None:
    spans = segment_sentences("Cites nothing real [99].")
    cmap = extract_citation_map(spans, evidence_universe={1, 2})
    assert cmap.entries == {0: (99,)}
    assert cmap.out_of_universe == frozenset({99})


def test_mask_singleton_marker_repairs_whitespace() -> None:
    masked = mask_citation("It is false [9]. Posts spread [10].", 9)
    assert masked.masked_text == "It is false. Posts spread [10]."
    assert masked.ground_truth == frozenset({0})
    assert unmask(masked.masked_text, masked.removal_log) == masked.original_text


def test_mask_comma_list_keeps_other_indices() -> None:
    for text, idx, expected in [
        ("Shown wrong [6,7].", 6, "Shown wrong [7]."),
        ("Shown wrong [6,7].", 7, "Shown wrong [6]."),
        ("Shown wrong [6, 7, 8].", 7, "Shown wrong [6, 8]."),
        ("Chained [6][7].", 6, "Chained [7]."),
        ("Chained [6][7].", 7, "Chained [6]."),
    ]:
        masked = mask_citation(text, idx)
        assert masked.masked_text == expected
        assert unmask(masked.masked_text, masked.removal_log) == text


def test_mask_trailing_and_leading_markers() -> None:
    masked = mask_citation("You are wrong [6]", 6)
    assert masked.masked_text == "You are wrong"
    assert unmask(masked.masked_text, masked.removal_log) == "You are wrong [6]"

    masked = mask_citation("[6] You are wrong.", 6)
    assert masked.masked_text == "You are wrong."


def test_mask_repeated_index_removes_all_markers() -> None:
    masked = mask_citation("First [9]. Second [9] again. Third [2].", 9)
    assert "[9]" not in masked.masked_text
    assert "[2]" in masked.masked_text
    assert masked.ground_truth == frozenset({0, 1})
    assert unmask(masked.masked_text, masked.removal_log) == masked.original_text


def test_mask_preserves_sentence_count_and_alignment() -> None:
    masked = mask_citation(EXPLANATION, 10)
    assert len(masked.masked_sentences) == 3
    resegmented = [s.text for s in segment_sentences(masked.masked_text)]
    assert list(masked.masked_sentences) == resegmented
    assert masked.masked_sentences[1] == "The company never made such a pledge."
    assert masked.ground_truth == frozenset({1})


def test_mask_uncited_index_raises() -> None:
    with pytest.raises(ValueError):
        mask_citation(EXPLANATION, 42)


def test_mask_round_trip_fuzz() -> None:
    rng = random.Random(424242)
    done = 0
    while done < 1000:
        text, cited = random_explanation(rng)
        if not cited:
            continue
        target = rng.choice(cited)
        sentences = segment_sentences(text)
        cmap = extract_citation_map(sentences)
        if target not in cmap.cited_indices():
            continue
        masked = mask_citation(text, target, sentences=sentences, citation_map=cmap)

        assert unmask(masked.masked_text, masked.removal_log) == text, text
        assert "  " not in masked.masked_text, (text, masked.masked_text)
        assert " ." not in masked.masked_text, (text, masked.masked_text)

        remasked = extract_citation_map(segment_sentences(masked.masked_text))
        expected_entries = {}
        for pos, indices in cmap.entries.items():
            kept = tuple(i for i in indices if i != target)
            if kept:
                expected_entries[pos] = kept
        assert remasked.entries == expected_entries, (text, target)
        assert len(masked.masked_sentences) == len(sentences)
        done += 1


def test_validate_citations_reports_all_issue_kinds() -> None:
    text = "Cites a stray index [99]. Repeats [1]. And again [1]. See https://example.com too."
    spans = segment_sentences(text)
    cmap = extract_citation_map(spans, evidence_universe={1, 2})
    issues = validate_citations(cmap, {1, 2}, sentences=spans)
    kinds = {i.kind for i in issues}
    assert kinds == {"out_of_universe", "uncited_evidence", "repeated_citation", "url_token"}
    uncited = [i for i in issues if i.kind == "uncited_evidence"]
    assert [i.evidence_idx for i in uncited] == [2]
    repeated = [i for i in issues if i.kind == "repeated_citation"]
    assert [i.evidence_idx for i in repeated] == [1]


def test_validate_clean_map_yields_no_issues() -> None:
    spans = segment_sentences(EXPLANATION)
    cmap = extract_citation_map(spans, evidence_universe={9, 10, 11})
    assert validate_citations(cmap, {9, 10, 11}, sentences=spans) == []
