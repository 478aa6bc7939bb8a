"""Mutual k-NN graph construction, LSH candidate retrieval, and local repair.

An edge (i, j) exists only when each node is among the other's k nearest
neighbors (Euclidean); its weight is exp(-||h_i - h_j||^2 / 100). The graph
additionally keeps each node's directed top-k list so that repairs after
embedding updates can re-enforce mutuality without a full rebuild.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .kernels import pairwise_sq_dists, rows_sq_dists
from .store import EmbeddingTable

WEIGHT_SCALE = 100.0

# Default random-hyperplane LSH geometry (sign hashing).
DEFAULT_LSH_TABLES = 8
DEFAULT_LSH_PLANES = 12


def edge_weight(h_i, h_j) -> float:
    """exp(-squared distance / 100); 1.0 exactly for coincident embeddings."""
    h_i = np.asarray(h_i, dtype=np.float64)
    h_j = np.asarray(h_j, dtype=np.float64)
    if h_i.shape != h_j.shape or h_i.ndim != 1:
        raise DomainError(f"edge_weight needs two equal-length vectors, got {h_i.shape} and {h_j.shape}")
    diff = h_i - h_j
    return math.exp(-float(diff @ diff) / WEIGHT_SCALE)


def _sq_dist(rows: np.ndarray, i: int, j: int) -> float:
    diff = rows[i] - rows[j]
    return float(diff @ diff)


@dataclass
class MutualKnnGraph:
    n: int
    k: int
    adjacency: list[dict[int, float]]
    # Directed top-k lists (ordered by (distance, id)); needed for repair.
    knn_ids: np.ndarray | None = None
    knn_d2: np.ndarray | None = None

    def neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self.adjacency[i]))

    def weight(self, i: int, j: int) -> float:
        try:
            return self.adjacency[i][j]
        except KeyError:
            raise DomainError(f"no edge between {i} and {j}") from None

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.adjacency[i]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def edge_set(self) -> set[tuple[int, int]]:
        return {(i, j) for i in range(self.n) for j in self.adjacency[i] if i < j}

    def copy(self) -> "MutualKnnGraph":
        return MutualKnnGraph(
            n=self.n,
            k=self.k,
            adjacency=[dict(a) for a in self.adjacency],
            knn_ids=None if self.knn_ids is None else self.knn_ids.copy(),
            knn_d2=None if self.knn_d2 is None else self.knn_d2.copy(),
        )


def _topk_row(d2_row: np.ndarray, self_id: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(d2_row, kind="stable")  # stable sort: ties keep smaller id first
    order = order[order != self_id][:k]
    return order.astype(np.int64), d2_row[order]


def build_graph(emb: EmbeddingTable, k: int) -> MutualKnnGraph:
    """Mutual k-NN graph over the table's rows with exponential edge weights."""
    n = emb.n
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if k >= n:
        raise DomainError(f"k must be < n (got k={k}, n={n})")
    d2 = pairwise_sq_dists(emb.rows)
    np.fill_diagonal(d2, np.inf)
    knn_ids = np.empty((n, k), dtype=np.int64)
    knn_d2 = np.empty((n, k), dtype=np.float64)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    knn_ids[:] = order
    knn_d2[:] = np.take_along_axis(d2, order, axis=1)

    neighbor_sets = [set(row.tolist()) for row in knn_ids]
    adjacency: list[dict[int, float]] = [{} for _ in range(n)]
    for i in range(n):
        for j in knn_ids[i]:
            j = int(j)
            if j > i and i in neighbor_sets[j]:
                w = math.exp(-_sq_dist(emb.rows, i, j) / WEIGHT_SCALE)
                adjacency[i][j] = w
                adjacency[j][i] = w
    return MutualKnnGraph(n=n, k=k, adjacency=adjacency, knn_ids=knn_ids, knn_d2=knn_d2)


@dataclass
class LshIndex:
    """Random-hyperplane sign-hash index; one bucket per sample per table."""

    num_tables: int
    planes_per_table: int
    seed: int
    hyperplanes: np.ndarray                  # (tables, planes, d)
    tables: list[dict[int, list[int]]] = field(default_factory=list)
    assignments: np.ndarray | None = None    # (n, tables) signatures

    def signatures(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.atleast_2d(vectors)
        bits = np.einsum("tpd,nd->ntp", self.hyperplanes, vectors) >= 0.0
        weights = 1 << np.arange(self.planes_per_table, dtype=np.int64)
        return bits @ weights

    def query(self, vector: np.ndarray) -> set[int]:
        sigs = self.signatures(vector)[0]
        out: set[int] = set()
        for t in range(self.num_tables):
            out.update(self.tables[t].get(int(sigs[t]), ()))
        return out

    def reinsert(self, ids, emb: EmbeddingTable) -> None:
        """Move the given samples to the buckets of their current embeddings."""
        ids = sorted(set(int(i) for i in ids))
        if not ids:
            return
        sigs = self.signatures(emb.rows[ids])
        for pos, i in enumerate(ids):
            for t in range(self.num_tables):
                old_sig = int(self.assignments[i, t])
                bucket = self.tables[t][old_sig]
                bucket.remove(i)
                if not bucket:
                    del self.tables[t][old_sig]
                new_sig = int(sigs[pos, t])
                self.tables[t].setdefault(new_sig, []).append(i)
                self.assignments[i, t] = new_sig


def build_lsh_index(emb: EmbeddingTable, num_tables: int = DEFAULT_LSH_TABLES,
                    planes: int = DEFAULT_LSH_PLANES, seed: int = 0) -> LshIndex:
    """Deterministic sign-hash index over the table's rows."""
    if num_tables < 1 or planes < 1:
        raise DomainError(f"need num_tables >= 1 and planes >= 1, got {num_tables}, {planes}")
    if emb.d < 1:
        raise DomainError("cannot hash 0-dimensional embeddings")
    rng = np.random.default_rng(seed)
    hyperplanes = rng.standard_normal((num_tables, planes, emb.d))
    index = LshIndex(
        num_tables=num_tables,
        planes_per_table=planes,
        seed=seed,
        hyperplanes=hyperplanes,
    )
    sigs = index.signatures(emb.rows)
    index.tables = [dict() for _ in range(num_tables)]
    for i in range(emb.n):
        for t in range(num_tables):
            index.tables[t].setdefault(int(sigs[i, t]), []).append(i)
    index.assignments = sigs.astype(np.int64)
    return index


def _lex_less(d2_a: float, id_a: int, d2_b: float, id_b: int) -> bool:
    return d2_a < d2_b or (d2_a == d2_b and id_a < id_b)


def repair_graph(g: MutualKnnGraph, idx: LshIndex | None, emb: EmbeddingTable,
                 changed, brute_force_candidates: bool = False) -> MutualKnnGraph:
    """Recompute neighborhoods around moved nodes and re-enforce mutuality.

    Candidate lists for each changed node come from its LSH buckets plus its
    former neighbors and their neighbors; with ``brute_force_candidates`` the
    candidate set is every node, which makes the repair exactly equal to a
    full rebuild. Unchanged nodes whose membership cannot have moved keep
    their lists; edges between untouched nodes are left as they were.
    """
    changed_ids = sorted(set(int(c) for c in changed))
    if not changed_ids:
        return g
    n = g.n
    for c in changed_ids:
        if not 0 <= c < n:
            raise DomainError(f"changed id {c} out of range [0, {n})")
    if g.knn_ids is None or g.knn_d2 is None:
        raise DomainError("graph is missing directed k-NN lists; rebuild it from embeddings")
    if idx is None and not brute_force_candidates:
        brute_force_candidates = True

    rows = emb.rows
    k = g.k
    changed_set = set(changed_ids)
    knn_ids = g.knn_ids.copy()
    knn_d2 = g.knn_d2.copy()

    # Reverse index: who currently lists a changed node in their directed top-k.
    listed_by: dict[int, set[int]] = {u: set() for u in changed_ids}
    for v in range(n):
        for j in knn_ids[v]:
            j = int(j)
            if j in changed_set:
                listed_by[j].add(v)

    touched: set[int] = set()
    dists_from_changed = rows_sq_dists(rows, np.asarray(changed_ids, dtype=np.int64))
    old_kth_d2 = g.knn_d2[:, k - 1]
    old_kth_id = g.knn_ids[:, k - 1]

    for pos, u in enumerate(changed_ids):
        d2_u = dists_from_changed[pos]
        if brute_force_candidates:
            cand = np.arange(n, dtype=np.int64)
            cand = cand[cand != u]
        else:
            cset = idx.query(rows[u])
            cset.update(int(x) for x in g.knn_ids[u])
            for nb in g.adjacency[u]:
                cset.add(nb)
                cset.update(g.adjacency[nb])
            cset.discard(u)
            cand = np.fromiter(sorted(cset), dtype=np.int64)
        cand_d2 = d2_u[cand]
        order = np.argsort(cand_d2, kind="stable")[:k]
        knn_ids[u] = cand[order]
        knn_d2[u] = cand_d2[order]

        # A node v is touched when u sat in its list or could now enter it.
        touched.update(listed_by[u])
        for v in cand:
            v = int(v)
            if v in changed_set:
                continue
            if _lex_less(float(d2_u[v]), u, float(old_kth_d2[v]), int(old_kth_id[v])):
                touched.add(v)
    touched -= changed_set

    if touched:
        touched_list = sorted(touched)
        d2_touched = rows_sq_dists(rows, np.asarray(touched_list, dtype=np.int64))
        for pos, v in enumerate(touched_list):
            row = d2_touched[pos].copy()
            row[v] = np.inf
            ids, d2s = _topk_row(row, v, k)
            knn_ids[v] = ids
            knn_d2[v] = d2s

    refreshed = changed_set | touched
    adjacency = [dict(a) for a in g.adjacency]
    for r in refreshed:
        for nb in list(adjacency[r]):
            del adjacency[nb][r]
        adjacency[r] = {}
    neighbor_sets = [set(row.tolist()) for row in knn_ids]
    for r in sorted(refreshed):
        for j in knn_ids[r]:
            j = int(j)
            if r in neighbor_sets[j]:
                w = math.exp(-_sq_dist(rows, r, j) / WEIGHT_SCALE)
                adjacency[r][j] = w
                adjacency[j][r] = w
    return MutualKnnGraph(n=n, k=k, adjacency=adjacency, knn_ids=knn_ids, knn_d2=knn_d2)


def dump_graph(g: MutualKnnGraph, target) -> None:
    """One JSON line per node: {"id": i, "nbrs": [...], "w": [...]}."""
    def emit(fh):
        for i in range(g.n):
            nbrs = sorted(g.adjacency[i])
            line = {"id": i, "nbrs": nbrs, "w": [g.adjacency[i][j] for j in nbrs]}
            fh.write(json.dumps(line) + "\n")

    if hasattr(target, "write"):
        emit(target)
        return
    with open(target, "w", encoding="utf-8") as fh:
        emit(fh)


def load_graph(source) -> MutualKnnGraph:
    """Rebuild a graph from its JSONL dump (directed lists are not stored)."""
    if hasattr(source, "read"):
        lines = source.readlines()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    records = [json.loads(line) for line in lines if line.strip()]
    n = len(records)
    adjacency: list[dict[int, float]] = [{} for _ in range(n)]
    for rec in records:
        i = int(rec["id"])
        for j, w in zip(rec["nbrs"], rec["w"]):
            adjacency[i][int(j)] = float(w)
    k = max((len(a) for a in adjacency), default=1) or 1
    return MutualKnnGraph(n=n, k=k, adjacency=adjacency)
