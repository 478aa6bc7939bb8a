"""Shared fixtures and reference oracles used across the suite."""

import math

import numpy as np
import pytest

from coresel.store import EmbeddingTable


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def positive_table(rng: np.random.Generator, n: int, d: int) -> EmbeddingTable:
    """Instance with strictly positive coordinates, so all cosines are >= 0."""
    return EmbeddingTable(rng.uniform(0.05, 1.0, size=(n, d)))


def mutual_knn_oracle(rows: np.ndarray, k: int):
    """O(n^2) reference: per-node (distance, id)-ordered lists and mutual edges."""
    n = rows.shape[0]
    lists = []
    for i in range(n):
        d2 = np.sum((rows - rows[i]) ** 2, axis=1)
        d2[i] = np.inf
        order = np.argsort(d2, kind="stable")[:k]
        lists.append([int(j) for j in order])
    sets = [set(l) for l in lists]
    edges = {(i, j) for i in range(n) for j in sets[i] if j > i and i in sets[j]}
    return edges, lists


def audit_graph(g, emb: EmbeddingTable) -> None:
    """Assert symmetry, degree cap, no self-loops, and weight consistency."""
    for i in range(g.n):
        assert i not in g.adjacency[i], f"self-loop at {i}"
        assert len(g.adjacency[i]) <= g.k, f"degree of {i} exceeds k"
        for j, w in g.adjacency[i].items():
            assert g.adjacency[j].get(i) == w, f"asymmetric edge ({i}, {j})"
            d2 = float(np.sum((emb.rows[i] - emb.rows[j]) ** 2))
            assert abs(w - math.exp(-d2 / 100.0)) <= 1e-9
            assert 0.0 < w <= 1.0


def representation_reference(core, pool, emb: EmbeddingTable) -> float:
    """Direct double loop over pool x core with per-pair cosines."""
    if not core:
        return 0.0
    total = 0.0
    for i in pool:
        best = -np.inf
        vi = emb.rows[i]
        ni = np.linalg.norm(vi)
        for j in core:
            vj = emb.rows[j]
            best = max(best, float(vi @ vj) / (ni * np.linalg.norm(vj)))
        total += best
    return total
