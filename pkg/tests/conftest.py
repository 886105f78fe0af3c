from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from intentgate import classifier as clf
from intentgate import scoring, synth
from intentgate.domain import EmbeddedUtterance, IntentCatalog, IntentDef, LabeledDataset


@pytest.fixture(scope="session")
def world():
    return synth.make_world()


@pytest.fixture(scope="session")
def model(world):
    return clf.train(world.train, world.catalog, clf.TrainingConfig())


@pytest.fixture(scope="session")
def dictionary(world):
    X = world.train.embedding_matrix()
    n_atoms = scoring.default_n_atoms(len(world.train), len(world.catalog))
    return scoring.fit_nnk(X, n_atoms=n_atoms, seed=0)


@pytest.fixture(scope="session")
def wide_catalog():
    """Six intents, enough headroom for negative sampling at k=3."""
    names = ("billing", "scheduling", "support", "shipping", "returns", "upgrades")
    return IntentCatalog(
        tuple(IntentDef(n, f"The user asks about {n}.") for n in names)
    )


def _unit(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


@pytest.fixture(scope="session")
def wide_dataset(wide_catalog):
    """Embedded utterances for the wide catalog, varied class sizes."""
    rng = np.random.default_rng(17)
    sizes = (7, 5, 6, 3, 8, 5)
    dim = 12
    centers = {
        name: _unit(rng, dim) for name in wide_catalog.names
    }
    items = []
    for name, size in zip(wide_catalog.names, sizes):
        for i in range(size):
            vec = centers[name] + 0.15 * rng.normal(size=dim)
            vec = vec / np.linalg.norm(vec)
            items.append(
                (EmbeddedUtterance(f"{name}-{i}", f"{name} example {i}", vec), name)
            )
    return LabeledDataset(items)


@pytest.fixture(scope="session")
def wide_model(wide_dataset, wide_catalog):
    return clf.train(wide_dataset, wide_catalog, clf.TrainingConfig(epochs=120))


@pytest.fixture(scope="session")
def hint3_path():
    return Path(__file__).parent / "fixtures" / "hint3_sample.csv"
