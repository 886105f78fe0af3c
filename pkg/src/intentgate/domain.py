"""Shared vocabulary for the pipeline: intent catalogs, embedded utterances,
labeled datasets, and their on-disk formats.

Embeddings are unit-normalized on ingestion so reconstruction-error
thresholds stay comparable across embedding backends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import DataError

DEFAULT_OOS_TOKEN = "OOS"

UNIT_NORM_TOL = 1e-6


def normalize_embedding(v) -> np.ndarray:
    """Scale a vector to unit L2 norm.

    Idempotent and invariant to positive rescaling. Rejects empty vectors,
    non-finite entries, and the zero vector.
    """
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError("embedding must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise DataError("embedding has non-finite entries")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DataError("degenerate embedding: zero norm")
    return arr / norm


@dataclass(frozen=True)
class IntentDef:
    """One in-scope intent: a name plus a natural-language guideline.

    The guideline may be empty before generation.
    """

    name: str
    guideline: str = ""

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.strip())
        if not self.name:
            raise DataError("intent name must be non-empty")


@dataclass(frozen=True)
class IntentCatalog:
    """The ordered set of in-scope intents plus the out-of-scope sentinel."""

    intents: tuple[IntentDef, ...]
    oos_token: str = DEFAULT_OOS_TOKEN

    def __post_init__(self):
        object.__setattr__(self, "intents", tuple(self.intents))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(i.name for i in self.intents)

    def __len__(self) -> int:
        return len(self.intents)

    def get(self, name: str) -> IntentDef:
        for intent in self.intents:
            if intent.name == name:
                return intent
        raise DataError(f"unknown intent: {name!r}")

    def with_guideline(self, name: str, guideline: str) -> "IntentCatalog":
        """Return a copy with one intent's guideline replaced."""
        self.get(name)
        updated = tuple(
            IntentDef(i.name, guideline) if i.name == name else i for i in self.intents
        )
        return IntentCatalog(updated, self.oos_token)


def validate_catalog(catalog: IntentCatalog) -> list[str]:
    """Report catalog violations; an empty list means the catalog is valid.

    Report-style by design: callers that require validity raise on a
    non-empty report.
    """
    violations = []
    if len(catalog.intents) < 1:
        violations.append("catalog has no intents")
    seen = set()
    for intent in catalog.intents:
        if not intent.name:
            violations.append("empty intent name")
        if intent.name in seen:
            violations.append(f"duplicate name: {intent.name!r}")
        seen.add(intent.name)
    if not catalog.oos_token:
        violations.append("empty oos_token")
    if catalog.oos_token in seen:
        violations.append(f"sentinel collision: oos_token {catalog.oos_token!r} is also an intent name")
    return violations


def require_valid_catalog(catalog: IntentCatalog) -> IntentCatalog:
    violations = validate_catalog(catalog)
    if violations:
        raise DataError("invalid catalog: " + "; ".join(violations))
    return catalog


@dataclass(frozen=True, eq=False)
class EmbeddedUtterance:
    """A user utterance, optionally paired with a unit-norm embedding.

    The embedding is absent for freshly ingested text (e.g. HINT3 rows) and
    gets attached once a backend has embedded it.
    """

    id: str
    text: str
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.id:
            raise DataError("utterance id must be non-empty")
        if self.embedding is not None:
            arr = np.asarray(self.embedding, dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise DataError(f"utterance {self.id}: embedding must be a 1-d vector")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"utterance {self.id}: embedding has non-finite entries")
            if abs(float(np.linalg.norm(arr)) - 1.0) > UNIT_NORM_TOL:
                raise DataError(f"utterance {self.id}: embedding is not unit-norm")
            object.__setattr__(self, "embedding", arr)

    @property
    def dim(self) -> Optional[int]:
        return None if self.embedding is None else int(self.embedding.size)


class LabeledDataset:
    """Utterances with labels drawn from the intent names plus the OOS token.

    Ids must be unique and every present embedding must share one dimension.
    """

    def __init__(self, items: Iterable[tuple[EmbeddedUtterance, str]]):
        self.items: list[tuple[EmbeddedUtterance, str]] = list(items)
        seen_ids = set()
        dim = None
        for utt, label in self.items:
            if not label:
                raise DataError(f"utterance {utt.id}: empty label")
            if utt.id in seen_ids:
                raise DataError(f"duplicate utterance id: {utt.id!r}")
            seen_ids.add(utt.id)
            if utt.embedding is not None:
                if dim is None:
                    dim = utt.dim
                elif utt.dim != dim:
                    raise DataError(
                        f"utterance {utt.id}: embedding dim {utt.dim} != dataset dim {dim}"
                    )
        self._dim = dim

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[tuple[EmbeddedUtterance, str]]:
        return iter(self.items)

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    @property
    def labels(self) -> list[str]:
        return [label for _, label in self.items]

    @property
    def utterances(self) -> list[EmbeddedUtterance]:
        return [utt for utt, _ in self.items]

    def subset_for_label(self, label: str) -> list[EmbeddedUtterance]:
        return [utt for utt, lab in self.items if lab == label]

    def embedding_matrix(self) -> np.ndarray:
        """Stack all embeddings into an (n, d) matrix; fails if any is missing."""
        rows = []
        for utt, _ in self.items:
            if utt.embedding is None:
                raise DataError(f"utterance {utt.id}: missing embedding")
            rows.append(utt.embedding)
        if not rows:
            raise DataError("dataset is empty")
        return np.stack(rows)

    def check_labels(self, catalog: IntentCatalog, allow_oos: bool = True) -> None:
        """Raise unless every label is an intent name (or, optionally, the OOS token)."""
        valid = set(catalog.names)
        for utt, label in self.items:
            if label == catalog.oos_token:
                if not allow_oos:
                    raise DataError(
                        f"utterance {utt.id}: OOS not permitted in classifier training"
                    )
                continue
            if label not in valid:
                raise DataError(f"utterance {utt.id}: unknown label {label!r}")


# ---------------------------------------------------------------------------
# File formats


def catalog_to_dict(catalog: IntentCatalog) -> dict:
    return {
        "oos_token": catalog.oos_token,
        "intents": [{"name": i.name, "guideline": i.guideline} for i in catalog.intents],
    }


def catalog_from_dict(data: dict) -> IntentCatalog:
    try:
        intents = tuple(
            IntentDef(entry["name"], entry.get("guideline", "")) for entry in data["intents"]
        )
        catalog = IntentCatalog(intents, data.get("oos_token", DEFAULT_OOS_TOKEN))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed catalog: {exc}") from exc
    return require_valid_catalog(catalog)


def load_catalog(path) -> IntentCatalog:
    with open(path, encoding="utf-8") as fh:
        return catalog_from_dict(json.load(fh))


def save_catalog(catalog: IntentCatalog, path) -> None:
    Path(path).write_text(
        json.dumps(catalog_to_dict(catalog), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_dataset(path, normalize: bool = True) -> LabeledDataset:
    """Read a JSONL dataset of {"id", "text", "label", "embedding"?} records.

    With ``normalize`` (the default), embeddings are unit-normalized on
    ingestion; otherwise they must already be unit-norm.
    """
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                utt_id = str(record["id"])
                text = record["text"]
                label = record["label"]
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing field {exc}") from exc
            embedding = record.get("embedding")
            if embedding is not None and normalize:
                embedding = normalize_embedding(embedding)
            items.append((EmbeddedUtterance(utt_id, text, embedding), label))
    return LabeledDataset(items)


def dataset_records(dataset: LabeledDataset) -> Iterator[dict]:
    for utt, label in dataset:
        record = {"id": utt.id, "text": utt.text, "label": label}
        if utt.embedding is not None:
            record["embedding"] = [float(x) for x in utt.embedding]
        yield record


def save_dataset(dataset: LabeledDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in dataset_records(dataset):
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
