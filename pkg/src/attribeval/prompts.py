"""Prompt templates for evidence selection, explanation generation and
citation recovery.

Templates are registered by id so a run manifest can name the exact prompt
wording it used.  Rendering is deterministic: equal inputs produce equal
strings, which the scripted transport relies on for fixture lookup.
"""
from __future__ import annotations

from collections.abc import Sequence

__all__ = [
    "SELECTION_TEMPLATE_ID",
    "GENERATION_TEMPLATE_ID",
    "RECOVERY_TEMPLATE_ID",
    "render_selection_prompt",
    "render_generation_prompt",
    "render_recovery_prompt",
]

SELECTION_TEMPLATE_ID = "evidence-selection-v1"
GENERATION_TEMPLATE_ID = "explanation-generation-v1"
RECOVERY_TEMPLATE_ID = "citation-recovery-v1"

# One-shot demonstration for the selection stage.  The worked example pairs
# a full reason list with the minimal subset and a justification, so the
# model sees the expected output shape before the actual task.
_SELECTION_DEMONSTRATION = """\
Demonstration:
Reasons:
Reason [0]: Anglerfish may have a reputation for being among the creepier-looking ocean-dwellers, but it’s not because they grow to be seven feet long, as a viral image on Facebook claims.
Reason [1]: The Jan. 12 post shows a young girl reaching toward what appears to be a very large anglerfish mounted on display at a museum.
Reason [2]: The text above the image reads, "So,... I’ve spent my entire life thinking the Deep Sea Angler Fish was about the size of a Nerf football.
Reason [3]: What’s more, the picture referenced in the Facebook post alleging that anglerfish are typically 7 feet is taken from the Australian Museum’s 2012 exhibit titled "Deep Oceans".
Reason [4]: The anglerfish in the photo is actually a large-scale sculpture model of the fish made of plaster.
Reason [5]: When the exhibit opened in June 2012, The Sydney Morning Herald reported on how the exhibit’s team had created an "oversized anglerfish" and listed the many steps in making it: "Pieces such as the oversized anglerfish, with huge fangs and antenna-like flashing rod to attract prey, begin with cutting and welding a metal frame, then sculpting material over it and, finally, hand painting it," the story says.

Claim: The typical anglerfish is seven feet long.
Veracity: False
Extracted Reasons: [3,5]
Justification: Reason [3] establishes that the Facebook post's claim relies on a picture from the Australian Museum's 2012 exhibit. Reason [5] then reveals that the anglerfish in the exhibit is an oversized sculpture, not an actual specimen. Together, these reasons logically demonstrate that the viral claim of typical anglerfish being seven feet long is false, as it is based on a misrepresented image from an exhibit."""

_SELECTION_INSTRUCTIONS = (
    "Instructions: You are required to retrieve a subset of reasons from the"
    " provided full reasons. The sentences in this subset should be coherent"
    " and logically consistent, presenting the most crucial information"
    " necessary to establish the veracity of the claim. Aim for the minimum"
    " number of sentences in the subset while maintaining the completeness"
    " and clarity. When extract reasons, use [1,2,3]. At last, provide a"
    " justification explaining why they are good reasons and how they form a"
    " logically consistent reasoning process."
)

_GENERATION_INSTRUCTIONS = (
    "Instructions: You are required to write an accurate, coherent and"
    " logically consistent explanation for the claim based on the given"
    " veracity and list of reasons in one paragraph. Use an unbiased and"
    " journalistic tone. When citing several search results, use [1][2][3]."
    " Ensure that each reason is cited only once. Do not cite multiple"
    " reasons in a single sentence."
)

_RECOVERY_INSTRUCTIONS = (
    "Find the most suitable explanation sentence(s) that can cite the given"
    " reason sentence. Return the sentence number(s) separated by comma,"
    " e.g., 0 or 0,2. Return -1 if no suitable sentences are found. Consider"
    " semantic citation relationships, not just keyword matching. Only"
    " return numbers, DO NOT include any additional output."
)


def render_selection_prompt(
    claim: str, veracity: str, evidence: Sequence[tuple[int, str]]
) -> str:
    """Build the one-shot evidence selection prompt.

    ``evidence`` is the full passage list as (index, text) pairs; indices
    appear verbatim so the model's subset answer needs no remapping.
    """
    if not evidence:
        raise ValueError("evidence list is empty")
    reasons = "\n".join(f"Reason [{idx}]: {text}" for idx, text in evidence)
    return (
        f"{_SELECTION_INSTRUCTIONS}\n"
        f"\n"
        f"{_SELECTION_DEMONSTRATION}\n"
        f"\n"
        f"Here's the actual task:\n"
        f"Reasons:\n"
        f"{reasons}\n"
        f"Claim: {claim}\n"
        f"Veracity: {veracity}\n"
        f"Extracted Reasons:"
    )


def render_generation_prompt(
    claim: str, veracity: str, evidence: Sequence[tuple[int, str]]
) -> str:
    """Build the zero-shot explanation generation prompt.

    Only the selected evidence is listed, keeping original corpus indices so
    inline citation markers in the output align with the corpus.
    """
    if not evidence:
        raise ValueError("evidence list is empty")
    reasons = "\n".join(f"Reason [{idx}] {text}" for idx, text in evidence)
    return (
        f"{_GENERATION_INSTRUCTIONS}\n"
        f"\n"
        f"Reasons:\n"
        f"{reasons}\n"
        f"\n"
        f"Claim:{claim}\n"
        f"Veracity: {veracity}\n"
        f"Explanation:"
    )


def render_recovery_prompt(evidence_text: str, sentences: Sequence[str]) -> str:
    """Build the citation recovery prompt for one masked task.

    Sentences are numbered from 0 to match the answer format the
    instructions ask for ("e.g., 0 or 0,2").
    """
    if not sentences:
        raise ValueError("no explanation sentences to present")
    numbered = "\n".join(f"{pos}. {text}" for pos, text in enumerate(sentences))
    return (
        f"{_RECOVERY_INSTRUCTIONS}\n"
        f"\n"
        f"Reason Sentence:\n"
        f"{evidence_text}\n"
        f"\n"
        f"Explanation Sentences:\n"
        f"{numbered}\n"
        f"\n"
        f"Answers:"
    )
