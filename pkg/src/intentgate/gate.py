"""LLM decision step for escalated utterances.

Builds a prompt offering the classifier's top-k intents (with guidelines)
plus an explicit out-of-scope option, queries a text-generation backend,
and parses the answer back onto the k+1 option set. Also hosts the
guideline-generation pass that fills intent descriptions from training
utterances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

from .classifier import TopKPrediction
from .domain import IntentCatalog, IntentDef, LabeledDataset
from .errors import BackendError, DataError

logger = logging.getLogger(__name__)

# Markers the shipped template guarantees; mock backends rely on them
# to recover the utterance and candidate names from a rendered prompt.
UTTERANCE_HEADER = "User message:"
CANDIDATES_HEADER = "Candidate intents:"
NO_GUIDELINE = "(no description)"

DEFAULT_MAX_TOKENS = 32
DEFAULT_TEMPERATURE = 0.0


def default_gate_template() -> str:
    return resources.files("intentgate").joinpath("templates/gate_prompt.txt").read_text(
        encoding="utf-8"
    )


def default_guideline_template() -> str:
    return resources.files("intentgate").joinpath("templates/guideline_prompt.txt").read_text(
        encoding="utf-8"
    )


def load_template(path=None) -> str:
    if path is None:
        return default_gate_template()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


@dataclass(frozen=True)
class GatePrompt:
    """A rendered prompt plus the option set it offers."""

    text: str
    candidate_names: tuple[str, ...]
    oos_token: str


@dataclass(frozen=True)
class GateVerdict:
    """Parsed backend answer; the label always comes from the k+1 options."""

    label: str
    raw: str
    parse_path: str  # exact | fuzzy | fallback


def render_candidates(candidates: Sequence[IntentDef]) -> str:
    lines = []
    for i, intent in enumerate(candidates, start=1):
        guideline = intent.guideline.strip() or NO_GUIDELINE
        lines.append(f"{i}. {intent.name}: {guideline}")
    return "\n".join(lines)


def build_prompt(
    utterance: str,
    candidates: Sequence[IntentDef],
    oos_token: str,
    template: Optional[str] = None,
) -> GatePrompt:
    """Render the escalation prompt; candidate order is preserved verbatim."""
    if len(candidates) < 1:
        raise DataError("prompt needs at least one candidate intent")
    names = [c.name for c in candidates]
    if len(set(names)) != len(names):
        raise DataError("duplicate candidate names in prompt")
    if oos_token in names:
        raise DataError("oos_token collides with a candidate name")
    text = template if template is not None else default_gate_template()
    rendered = (
        text.replace("{candidates}", render_candidates(candidates))
        .replace("{utterance}", utterance)
        .replace("{oos_token}", oos_token)
    )
    return GatePrompt(rendered, tuple(names), oos_token)


def parse_response(raw: str, candidate_names: Sequence[str], oos_token: str) -> GateVerdict:
    """Map raw backend text onto the option set.

    Layered: exact case-insensitive trimmed match, then unique substring
    containment, then fall back to the top-1 candidate. Total by design;
    the fallback path absorbs garbage and is logged.
    """
    options = list(candidate_names) + [oos_token]
    cleaned = raw.strip().casefold()
    for option in options:
        if cleaned == option.casefold():
            return GateVerdict(option, raw, "exact")
    haystack = raw.casefold()
    contained = [option for option in options if option.casefold() in haystack]
    if len(contained) == 1:
        return GateVerdict(contained[0], raw, "fuzzy")
    logger.warning("unparseable gate answer %r; falling back to top-1", raw[:120])
    return GateVerdict(candidate_names[0], raw, "fallback")


def decide(
    backend,
    utterance: str,
    topk: TopKPrediction,
    catalog: IntentCatalog,
    template: Optional[str] = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = DEFAULT_TEMPERATURE,
) -> GateVerdict:
    """Resolve an escalated utterance to one of the top-k intents or OOS.

    Backend failures re-raise as BackendError carrying the classifier top-1
    so the caller can apply its degradation policy.
    """
    candidates = [catalog.get(name) for name in topk.names]
    prompt = build_prompt(utterance, candidates, catalog.oos_token, template)
    try:
        raw = backend.generate(prompt.text, max_tokens=max_tokens, temperature=temperature)
    except BackendError as exc:
        exc.fallback_label = topk.top1
        raise
    return parse_response(raw, prompt.candidate_names, prompt.oos_token)


def render_guideline_prompt(
    intent_name: str, utterances: Sequence[str], template: Optional[str] = None
) -> str:
    text = template if template is not None else default_guideline_template()
    examples = "\n".join(f"- {u}" for u in utterances)
    return text.replace("{examples}", examples).replace("{intent}", intent_name)


def generate_guideline(
    backend,
    intent_name: str,
    utterances: Sequence[str],
    template: Optional[str] = None,
    max_tokens: int = 256,
) -> str:
    """Ask the backend for an intent definition grounded in example utterances.

    The backend's text is stored verbatim, with no post-processing.
    """
    if not utterances:
        raise DataError(f"intent {intent_name!r}: no utterances to describe")
    prompt = render_guideline_prompt(intent_name, utterances, template)
    raw = backend.generate(prompt, max_tokens=max_tokens, temperature=DEFAULT_TEMPERATURE)
    if not raw.strip():
        raise DataError(f"intent {intent_name!r}: backend returned an empty guideline")
    return raw


def generate_catalog_guidelines(
    backend,
    catalog: IntentCatalog,
    dataset: LabeledDataset,
    template: Optional[str] = None,
) -> IntentCatalog:
    """Fill every intent's guideline from its training utterances."""
    updated = catalog
    for intent in catalog.intents:
        texts = [utt.text for utt in dataset.subset_for_label(intent.name)]
        guideline = generate_guideline(backend, intent.name, texts, template)
        updated = updated.with_guideline(intent.name, guideline)
    return updated
