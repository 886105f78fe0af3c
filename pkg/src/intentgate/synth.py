"""Synthetic embedding world for hermetic end-to-end runs.

Three in-scope clusters sit on orthogonal axes of the unit sphere, with an
out-of-scope population split into a far core on a fourth axis and a small
boundary tail placed at a controlled angle off the in-scope centers. The
tail is what makes threshold sweeps interesting: its reconstruction scores
land between the high and low thresholds instead of saturating, while the
core stays far enough away that ranking in-scope against out-of-scope stays
essentially perfect.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    DEFAULT_OOS_TOKEN,
    EmbeddedUtterance,
    IntentCatalog,
    IntentDef,
    LabeledDataset,
    normalize_embedding,
)
from .errors import DataError

INTENT_NAMES = ("billing", "scheduling", "support")

DEFAULT_SEED = 7


@dataclass(eq=False)
class SyntheticWorld:
    catalog: IntentCatalog
    train: LabeledDataset
    ins_test: LabeledDataset
    oos_test: LabeledDataset

    @property
    def dim(self) -> int:
        return self.train.dim

    def all_utterances(self) -> LabeledDataset:
        items = list(self.train) + list(self.ins_test) + list(self.oos_test)
        return LabeledDataset(items)

    def eval_mix(self, size: int = 100, oos_fraction: float = 0.2, seed: int = 0) -> LabeledDataset:
        """A shuffled evaluation slice with the given out-of-scope share."""
        n_oos = round(size * oos_fraction)
        n_ins = size - n_oos
        if n_ins > len(self.ins_test) or n_oos > len(self.oos_test):
            raise DataError("eval_mix larger than the available test pools")
        items = list(self.ins_test)[:n_ins] + list(self.oos_test)[:n_oos]
        order = np.random.default_rng([seed, 101]).permutation(len(items))
        return LabeledDataset([items[i] for i in order])

    def embed_table(self) -> dict[str, np.ndarray]:
        """text -> unit embedding, for pinning the mock embed backend."""
        table = {}
        for dataset in (self.train, self.ins_test, self.oos_test):
            for utt, _ in dataset:
                table[utt.text] = utt.embedding
        return table

    def oracle(self) -> dict[str, str]:
        """text -> gold label, for driving the oracle mock generator."""
        mapping = {}
        for dataset in (self.train, self.ins_test, self.oos_test):
            for utt, gold in dataset:
                mapping[utt.text] = gold
        return mapping


def _cluster_point(center: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return normalize_embedding(center + rng.normal(scale=sigma, size=center.shape))


def _tail_point(
    center: np.ndarray,
    away: np.ndarray,
    angle: float,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Unit vector at the given angle from ``center``, tilted toward ``away``."""
    direction = away + rng.normal(scale=sigma, size=center.shape)
    direction = direction - (direction @ center) * center
    norm = float(np.linalg.norm(direction))
    if norm < 1e-12:
        raise DataError("degenerate tail direction")
    direction = direction / norm
    return np.cos(angle) * center + np.sin(angle) * direction


def make_world(
    seed: int = DEFAULT_SEED,
    dim: int = 16,
    train_per_intent: int = 100,
    ins_test_total: int = 100,
    oos_total: int = 100,
    ins_sigma: float = 0.05,
    oos_sigma: float = 0.05,
    oos_tail_fraction: float = 0.3,
    tail_angle_deg: tuple[float, float] = (24.0, 34.0),
    oos_token: str = DEFAULT_OOS_TOKEN,
) -> SyntheticWorld:
    """Build the full world: catalog, train split, and both test splits.

    ``tail_angle_deg`` is the angular band, measured from an in-scope
    center, where boundary-tail out-of-scope points are placed. The band is
    chosen so their reconstruction residuals fall between the standard high
    and low thresholds once a dictionary is fit on the train split.
    """
    if dim < len(INTENT_NAMES) + 1:
        raise DataError(f"dim must be at least {len(INTENT_NAMES) + 1}")
    lo, hi = np.deg2rad(tail_angle_deg[0]), np.deg2rad(tail_angle_deg[1])
    if not 0 < lo <= hi:
        raise DataError("tail angle band must satisfy 0 < lo <= hi")

    catalog = IntentCatalog(
        tuple(
            IntentDef(name, f"The user asks about {name}.") for name in INTENT_NAMES
        ),
        oos_token=oos_token,
    )
    centers = [np.eye(dim)[i] for i in range(len(INTENT_NAMES))]
    oos_center = np.eye(dim)[len(INTENT_NAMES)]

    train_items = []
    rng = np.random.default_rng([seed, 1])
    for intent_idx, name in enumerate(INTENT_NAMES):
        for i in range(train_per_intent):
            vec = _cluster_point(centers[intent_idx], ins_sigma, rng)
            utt = EmbeddedUtterance(f"train-{name}-{i}", f"{name} question {i}", vec)
            train_items.append((utt, name))

    ins_items = []
    rng = np.random.default_rng([seed, 2])
    for i in range(ins_test_total):
        intent_idx = i % len(INTENT_NAMES)
        name = INTENT_NAMES[intent_idx]
        vec = _cluster_point(centers[intent_idx], ins_sigma, rng)
        ins_items.append(
            (EmbeddedUtterance(f"ins-{i}", f"{name} followup {i}", vec), name)
        )

    oos_items = []
    rng = np.random.default_rng([seed, 3])
    n_tail = round(oos_total * oos_tail_fraction)
    n_core = oos_total - n_tail
    for i in range(n_core):
        vec = _cluster_point(oos_center, oos_sigma, rng)
        oos_items.append(
            (EmbeddedUtterance(f"oos-{i}", f"unrelated request {i}", vec), oos_token)
        )
    for j in range(n_tail):
        i = n_core + j
        center = centers[j % len(INTENT_NAMES)]
        angle = rng.uniform(lo, hi)
        vec = _tail_point(center, oos_center, angle, oos_sigma, rng)
        oos_items.append(
            (EmbeddedUtterance(f"oos-{i}", f"unrelated request {i}", vec), oos_token)
        )

    return SyntheticWorld(
        catalog=catalog,
        train=LabeledDataset(train_items),
        ins_test=LabeledDataset(ins_items),
        oos_test=LabeledDataset(oos_items),
    )
