import numpy as np
import pytest

from refplay.data import Dataset, generate_shapes, synth_concepts


@pytest.fixture(scope="session")
def shapes():
    return generate_shapes(1)


@pytest.fixture(scope="session")
def synth():
    return synth_concepts(1, n_categories=20, n_items=565)


@pytest.fixture()
def toy_concepts():
    """Four hand-checkable items, two categories, one item per split edge."""
    feats = np.array(
        [
            [1, 1, 0, 0],
            [1, 0, 1, 0],
            [0, 0, 1, 1],
            [1, 0, 0, 1],
        ],
        dtype=np.uint8,
    )
    ids = np.arange(4)
    return Dataset(
        family="concepts",
        feature_dim=4,
        vocab_size=4,
        seed=0,
        ids=ids,
        features=feats,
        splits={
            "train": np.array([0, 1]),
            "dev": np.array([2]),
            "test": np.array([3]),
        },
        categories=np.array([0, 0, 1, 1]),
        n_categories=2,
    )
