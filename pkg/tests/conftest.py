"""Shared fixtures and synthetic-data builders."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corml import InteractionMatrix


def random_interactions(rng, n_users, n_items, density=0.3) -> InteractionMatrix:
    """Random binary interactions with no empty user rows or item columns."""
    dense = (rng.random((n_users, n_items)) < density).astype(np.float64)
    for u in range(n_users):
        if dense[u].sum() == 0:
            dense[u, int(rng.integers(n_items))] = 1.0
    for i in range(n_items):
        if dense[:, i].sum() == 0:
            dense[int(rng.integers(n_users)), i] = 1.0
    return InteractionMatrix.from_csr(dense)


def random_hollow(rng, n, scale=1.0) -> np.ndarray:
    """Random dense symmetric matrix with an exactly zero diagonal."""
    a = rng.standard_normal((n, n)) * scale
    h = np.triu(a, 1)
    h = h + h.T
    return h


def power_law_pairs(
    n_users=2000,
    n_items=500,
    seed=7,
    n_clusters=8,
    in_cluster=0.85,
    degree_low=8,
    degree_high=40,
    pop_exponent=1.1,
):
    """Clustered interactions with power-law item popularity, as index
    pairs. Cluster structure gives co-occurrence signal beyond raw
    popularity; the popularity spread drives novelty differences."""
    rng = np.random.default_rng(seed)
    popularity = np.arange(1, n_items + 1, dtype=np.float64) ** -pop_exponent
    item_cluster = rng.integers(0, n_clusters, size=n_items)
    pairs = []
    for u in range(n_users):
        own = rng.integers(0, n_clusters)
        weights = popularity.copy()
        weights[item_cluster != own] *= 1.0 - in_cluster
        weights /= weights.sum()
        degree = min(int(rng.integers(degree_low, degree_high + 1)), n_items)
        items = rng.choice(n_items, size=degree, replace=False, p=weights)
        pairs.extend((u, int(i)) for i in sorted(items))
    return pairs


def pairs_to_tokens(pairs):
    return [(f"u{u}", f"i{i}") for u, i in pairs]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
