"""Fine-tuning dataset builder.

From an in-scope dataset, a trained classifier, and the catalog, builds
pairs of examples per utterance: a positive one carrying the classifier's
top-k candidates with the gold label as target, and a negative one carrying
k sampled non-gold intents with the out-of-scope token as target. Epoch
serialization re-shuffles candidate order deterministically so consumers can
train multiple epochs without positional bias.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .classifier import ClassifierModel, predict_topk
from .domain import EmbeddedUtterance, IntentCatalog, IntentDef, LabeledDataset
from .errors import DataError
from .gate import build_prompt

logger = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class FinetuneExample:
    utterance: str
    candidates: tuple[str, ...]
    target: str
    polarity: str

    def __post_init__(self):
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise DataError(f"bad polarity: {self.polarity!r}")
        if len(self.candidates) < 1:
            raise DataError("candidates must be non-empty")


def _perturb_text(text: str, rng: np.random.Generator) -> str:
    """Character-preserving case/whitespace jitter for oversampled items."""
    alpha_positions = [i for i, ch in enumerate(text) if ch.isalpha()]
    if alpha_positions:
        idx = int(rng.choice(alpha_positions))
        return text[:idx] + text[idx].swapcase() + text[idx + 1:]
    return text + " "


def select_examples(
    dataset: LabeledDataset,
    per_intent: int,
    seed: int,
    catalog: IntentCatalog,
) -> LabeledDataset:
    """Pick ``per_intent`` utterances per intent class, deterministically.

    Classes short of ``per_intent`` are topped up by oversampling with light
    surface perturbation; augmented copies keep the source embedding and get
    derived ids. Classes with no utterances at all are an error.
    """
    if per_intent < 1:
        raise DataError("per_intent must be >= 1")
    dataset.check_labels(catalog, allow_oos=False)
    selected: list[tuple[EmbeddedUtterance, str]] = []
    for intent_idx, intent in enumerate(catalog.intents):
        pool = dataset.subset_for_label(intent.name)
        if not pool:
            raise DataError(f"intent {intent.name!r} has no training utterances")
        rng = np.random.default_rng([seed, intent_idx])
        if len(pool) >= per_intent:
            chosen = sorted(rng.choice(len(pool), size=per_intent, replace=False).tolist())
            selected.extend((pool[i], intent.name) for i in chosen)
        else:
            selected.extend((utt, intent.name) for utt in pool)
            for aug_idx in range(per_intent - len(pool)):
                src = pool[int(rng.integers(len(pool)))]
                aug = EmbeddedUtterance(
                    f"{src.id}#aug{aug_idx}", _perturb_text(src.text, rng), src.embedding
                )
                selected.append((aug, intent.name))
    return LabeledDataset(selected)


def build_ftset(
    subset: LabeledDataset,
    classifier: ClassifierModel,
    catalog: IntentCatalog,
    k: int,
    seed: int,
    force_gold_in_candidates: bool = False,
) -> list[FinetuneExample]:
    """Create the positive/negative example pairs, one pair per utterance.

    Negative candidates are k distinct intents sampled without the gold
    label, so a negative list never contains the gold or the OOS token. The
    positive list is the literal classifier top-k unless
    ``force_gold_in_candidates`` swaps the gold into the last slot.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    n_classes = len(catalog)
    if n_classes <= k:
        raise DataError(
            f"insufficient intent classes for negative sampling: need at least {k + 1}, have {n_classes}"
        )
    if tuple(classifier.classes) != catalog.names:
        raise DataError("classifier classes do not match the catalog")
    subset.check_labels(catalog, allow_oos=False)

    names = catalog.names
    examples: list[FinetuneExample] = []
    gold_absent = 0
    for idx, (utt, gold) in enumerate(subset):
        if utt.embedding is None:
            raise DataError(f"utterance {utt.id}: missing embedding")
        topk = predict_topk(classifier, utt.embedding, k)
        positive_candidates = list(topk.names)
        if gold not in positive_candidates:
            gold_absent += 1
            if force_gold_in_candidates:
                positive_candidates[-1] = gold
        examples.append(
            FinetuneExample(utt.text, tuple(positive_candidates), gold, POSITIVE)
        )

        rng = np.random.default_rng([seed, idx])
        pool = [name for name in names if name != gold]
        negative_idx = rng.choice(len(pool), size=k, replace=False)
        negative_candidates = tuple(pool[i] for i in negative_idx)
        examples.append(
            FinetuneExample(utt.text, negative_candidates, catalog.oos_token, NEGATIVE)
        )
    if gold_absent:
        logger.info(
            "build_ftset: %d/%d positives lack the gold label in their candidates%s",
            gold_absent,
            len(subset),
            " (gold forced in)" if force_gold_in_candidates else "",
        )
    return examples


def gold_absent_positives(examples: Sequence[FinetuneExample]) -> int:
    """How many positive examples do not offer their own target as a candidate."""
    return sum(
        1 for ex in examples if ex.polarity == POSITIVE and ex.target not in ex.candidates
    )


def _candidate_defs(names: Sequence[str], catalog: IntentCatalog) -> list[IntentDef]:
    return [catalog.get(name) for name in names]


def serialize_epoch(
    examples: Sequence[FinetuneExample],
    epoch: int,
    base_seed: int,
    catalog: IntentCatalog,
    template: Optional[str] = None,
) -> list[str]:
    """Render one epoch of JSONL training records with shuffled candidates.

    The shuffle seed derives from (base_seed, epoch, example index), so the
    same call is byte-identical and different epochs differ. Targets and the
    candidate multiset are never touched, only the order.
    """
    lines = []
    for idx, ex in enumerate(examples):
        rng = np.random.default_rng([base_seed, epoch, idx])
        order = rng.permutation(len(ex.candidates))
        shuffled = tuple(ex.candidates[i] for i in order)
        defs = _candidate_defs(shuffled, catalog)
        prompt = build_prompt(ex.utterance, defs, catalog.oos_token, template)
        record = {
            "utterance": ex.utterance,
            "candidates": [{"name": d.name, "guideline": d.guideline} for d in defs],
            "target": ex.target,
            "prompt": prompt.text,
            "completion": ex.target,
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    return lines


def write_epochs(
    examples: Sequence[FinetuneExample],
    epochs: int,
    base_seed: int,
    catalog: IntentCatalog,
    base_path,
    template: Optional[str] = None,
) -> list[str]:
    """Write one ``<base>.epochN.jsonl`` file per epoch; returns the paths."""
    base = str(base_path)
    if base.endswith(".jsonl"):
        base = base[: -len(".jsonl")]
    paths = []
    for epoch in range(epochs):
        lines = serialize_epoch(examples, epoch, base_seed, catalog, template)
        path = f"{base}.epoch{epoch}.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        paths.append(path)
    return paths
