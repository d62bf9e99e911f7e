"""Two-stage explanation generation over a chat-completion transport.

Stage one asks a model to select the evidence subset worth citing; stage
two asks the same model to write a one-paragraph explanation that cites the
selected passages inline.  Both stages speak to the model through a
ChatTransport, so live HTTP access and scripted test fixtures are
interchangeable.
"""
from __future__ import annotations

import hashlib
import logging
import os
import time
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from .citeparse import MARKER_RE, extract_citation_map, segment_sentences, validate_citations
from .corpus import ClaimRecord, ExplanationRecord
from .prompts import (
    GENERATION_TEMPLATE_ID,
    SELECTION_TEMPLATE_ID,
    render_generation_prompt,
    render_selection_prompt,
)

__all__ = [
    "API_KEY_ENV",
    "TransportError",
    "ParseFailure",
    "TransportParams",
    "ChatTransport",
    "HttpChatTransport",
    "ScriptedTransport",
    "GenerationConfig",
    "SelectionResult",
    "prompt_key",
    "complete_with_retries",
    "select_evidence",
    "parse_selection_output",
    "generate_explanation",
]

logger = logging.getLogger(__name__)

API_KEY_ENV = "ATTRIB_EVAL_API_KEY"

# patched in tests so retry backoff does not slow the suite down
_sleep = time.sleep


class TransportError(Exception):
    """A chat transport failed to produce a completion."""


class ParseFailure(Exception):
    """Model output did not contain the expected structure."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


@dataclass(frozen=True)
class TransportParams:
    model_id: str
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout: float = 60.0


class ChatTransport(Protocol):
    def complete(self, messages: Sequence[Mapping[str, str]], params: TransportParams) -> str:
        ...


class HttpChatTransport:
    """OpenAI-compatible chat completion endpoint over HTTP.

    POSTs `{model, messages, temperature, max_tokens}` to the configured
    URL and reads the first choice's message content.  The bearer token
    comes from the ATTRIB_EVAL_API_KEY environment variable unless given
    explicitly.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._client = client or httpx.Client()

    def complete(self, messages: Sequence[Mapping[str, str]], params: TransportParams) -> str:
        payload = {
            "model": params.model_id,
            "messages": list(messages),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._client.post(
                self.base_url, json=payload, headers=headers, timeout=params.timeout
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"chat request failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(
                f"chat endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc


def prompt_key(messages: Sequence[Mapping[str, str]]) -> str:
    """Stable digest of a rendered prompt, used to key scripted replies."""
    joined = "\n".join(f"{m['role']}:\n{m['content']}" for m in messages)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


class ScriptedTransport:
    """Replays canned completions from a fixture directory.

    Each fixture file is named `<prompt_key>.txt` and holds the reply for
    the prompt hashing to that key.  Deterministic by construction; a
    missing fixture raises instead of improvising.
    """

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)

    def complete(self, messages: Sequence[Mapping[str, str]], params: TransportParams) -> str:
        key = prompt_key(messages)
        path = self.fixtures_dir / f"{key}.txt"
        if not path.exists():
            head = messages[-1]["content"][:120].replace("\n", " ")
            raise TransportError(f"no scripted reply {key}.txt for prompt starting {head!r}")
        return path.read_text(encoding="utf-8")

    @staticmethod
    def save_reply(
        fixtures_dir: str | Path, messages: Sequence[Mapping[str, str]], reply: str
    ) -> Path:
        folder = Path(fixtures_dir)
        folder.mkdir(parents=True, exist_ok=True)
        path = folder / f"{prompt_key(messages)}.txt"
        path.write_text(reply, encoding="utf-8")
        return path


@dataclass(frozen=True)
class GenerationConfig:
    """Model id plus sampling and retry policy shared by both stages.

    The same model id drives selection and generation.  Temperature
    defaults to 0 for reproducibility.  Transport errors are retried up to
    ``max_retries`` attempts with exponential backoff; unparseable replies
    are re-prompted up to ``parse_retries`` extra times.
    """

    generator_id: str
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3
    parse_retries: int = 2
    backoff_base: float = 0.5
    selection_template_id: str = SELECTION_TEMPLATE_ID
    generation_template_id: str = GENERATION_TEMPLATE_ID

    def __post_init__(self) -> None:
        if self.max_retries < 1 or self.parse_retries < 0:
            raise ValueError("retry counts out of range")

    def params(self) -> TransportParams:
        return TransportParams(
            model_id=self.generator_id,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            timeout=self.timeout,
        )


@dataclass(frozen=True)
class SelectionResult:
    """Parsed evidence selection plus the raw model output it came from."""

    indices: frozenset[int]
    raw_output: str

    def to_dict(self) -> dict:
        return {"indices": sorted(self.indices), "raw_output": self.raw_output}


def user_message(prompt: str) -> list[dict[str, str]]:
    return [{"role": "user", "content": prompt}]


def complete_with_retries(
    transport: ChatTransport,
    messages: Sequence[Mapping[str, str]],
    config: GenerationConfig,
) -> str:
    last_error: Exception | None = None
    for attempt in range(config.max_retries):
        if attempt:
            _sleep(config.backoff_base * 2 ** (attempt - 1))
        try:
            text = transport.complete(messages, config.params())
        except TransportError as exc:
            last_error = exc
            logger.warning("transport attempt %d failed: %s", attempt + 1, exc)
            continue
        if text.strip():
            return text
        last_error = TransportError("empty completion")
        logger.warning("transport attempt %d returned empty completion", attempt + 1)
    raise TransportError(f"transport failed after {config.max_retries} attempts: {last_error}")


def parse_selection_output(text: str, universe: Iterable[int]) -> frozenset[int]:
    """Read the first bracketed integer list out of a selection reply.

    Indices outside the evidence universe are dropped with a warning; a
    reply without any bracketed list is a parse failure.
    """
    match = MARKER_RE.search(text)
    if match is None:
        raise ParseFailure("unparseable selection: no bracketed index list", raw_output=text)
    allowed = frozenset(universe)
    picked = []
    for token in match.group().strip("[]").split(","):
        idx = int(token.strip())
        if idx in allowed:
            if idx not in picked:
                picked.append(idx)
        else:
            logger.warning("selection index %d outside evidence universe, dropped", idx)
    return frozenset(picked)


def select_evidence(
    claim: str,
    veracity: str,
    evidence: Sequence[tuple[int, str]],
    transport: ChatTransport,
    config: GenerationConfig,
) -> SelectionResult:
    """Ask the model for the evidence subset worth citing.

    Returns the parsed indices together with the raw reply so the caller
    can record both.  Re-prompts on unparseable replies before giving up
    with the offending text attached.
    """
    if not evidence:
        raise ValueError("evidence list is empty")
    messages = user_message(render_selection_prompt(claim, veracity, evidence))
    universe = [idx for idx, _ in evidence]
    last: ParseFailure | None = None
    for _ in range(1 + config.parse_retries):
        raw = complete_with_retries(transport, messages, config)
        try:
            return SelectionResult(indices=parse_selection_output(raw, universe), raw_output=raw)
        except ParseFailure as exc:
            last = exc
            logger.warning("selection reply unparseable, re-prompting: %s", exc)
    assert last is not None
    raise last


def generate_explanation(
    claim: ClaimRecord,
    selected_evidence: Iterable[int],
    evidence_source: str,
    transport: ChatTransport,
    config: GenerationConfig,
) -> ExplanationRecord:
    """Generate a cited explanation for a claim from selected evidence.

    The prompt presents only the selected passages, keeping their corpus
    indices, and passes the veracity through verbatim.  The reply is
    segmented and citation-mapped; citation problems become validation
    issues on the record, not errors.
    """
    selected = sorted(set(selected_evidence))
    if not selected:
        raise ValueError("selected evidence is empty")
    pairs = [(p.idx, p.text) for p in claim.evidence if p.idx in selected]
    if len(pairs) != len(selected):
        known = {p.idx for p in claim.evidence}
        raise ValueError(f"selected evidence not in claim: {sorted(set(selected) - known)}")
    prompt = render_generation_prompt(claim.claim, claim.veracity, pairs)
    raw = complete_with_retries(transport, user_message(prompt), config)
    sentences = tuple(segment_sentences(raw))
    cmap = extract_citation_map(sentences, evidence_universe=selected)
    issues = validate_citations(cmap, selected, sentences=sentences)
    return ExplanationRecord(
        claim_id=claim.id,
        generator_id=config.generator_id,
        evidence_source=evidence_source,
        selected_evidence=tuple(selected),
        raw_text=raw,
        sentences=sentences,
        citation_map=cmap,
        validation_issues=tuple(issues),
    )
