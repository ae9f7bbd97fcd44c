"""Shared synthetic-data generators for the test suite."""

from pathlib import Path

import numpy as np
import pytest

from alfs import Dataset

REPO_ROOT = Path(__file__).resolve().parent.parent
TINY_CSV = REPO_ROOT / "data" / "tiny.csv"


def make_clusters(
    n: int = 120,
    d: int = 30,
    n_classes: int = 3,
    sep: float = 8.0,
    noise: float = 1.0,
    seed: int = 11,
) -> Dataset:
    """Well-separated Gaussian clusters with class labels.

    Cluster centers sit on a sphere of radius ``sep``; points scatter with
    unit ``noise``. Labels cycle through the classes so every class has
    n / n_classes members.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_classes, d))
    centers *= sep / np.linalg.norm(centers, axis=1, keepdims=True)
    labels = tuple(int(i % n_classes) for i in range(n))
    x = centers[np.array(labels)].T + noise * rng.normal(size=(d, n))
    return Dataset(x, labels=labels, source=f"clusters(seed={seed})")


def make_planted_anchors(
    seed: int,
    d: int = 6,
    n: int = 12,
    k: int = 3,
    noise: float = 0.05,
) -> tuple[Dataset, set[int]]:
    """Dataset whose non-anchor columns are noisy mixtures of k anchor columns.

    Returns the dataset and the planted anchor indices; a good sample
    selector should rank the anchors at the top.
    """
    rng = np.random.default_rng(seed)
    anchors = rng.normal(size=(d, k))
    anchors *= 3.0 / np.linalg.norm(anchors, axis=0, keepdims=True)
    anchor_idx = sorted(rng.choice(n, size=k, replace=False).tolist())
    x = np.empty((d, n))
    for j in range(n):
        if j in anchor_idx:
            x[:, j] = anchors[:, anchor_idx.index(j)]
        else:
            weights = rng.dirichlet(np.ones(k)) * rng.uniform(0.5, 1.5)
            x[:, j] = anchors @ weights + noise * rng.normal(size=d)
    return Dataset(x, source=f"anchors(seed={seed})"), set(anchor_idx)


def random_dataset(seed: int, d: int, n: int) -> Dataset:
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(d, n)), source=f"random(seed={seed})")


@pytest.fixture
def tiny_csv() -> Path:
    assert TINY_CSV.exists(), "bundled data/tiny.csv is missing"
    return TINY_CSV
