"""Adaptive update checking, selective recomputation, and graph propagation.

After each training interval a small probe of the last coreset is re-scored.
If the discrepancy against the cached score history crosses the threshold, a
budgeted, graph-independent set of stale/boundary samples is recomputed
exactly; every other node blends its own score with the affinity-qualified
recomputed neighbors through the closed-form minimizer of the local quadratic
objective. Embeddings follow the same route behind a second threshold, after
which the k-NN graph is locally repaired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .knn_graph import MutualKnnGraph, LshIndex, repair_graph
from .store import EmbeddingTable, ScoreLedger

AFFINITY_SCORE_SCALE = 0.1  # exp(-0.1 * |score gap|) factor of the affinity


@dataclass
class UpdatePlan:
    """Everything one check decided and changed, for auditing and event logs."""

    step: int
    triggered: bool
    delta_I: float
    recal_set: tuple[int, ...] = ()
    recal_scores: dict[int, float] = field(default_factory=dict)
    delta_H: float | None = None
    propagated_scores: dict[int, float] = field(default_factory=dict)
    propagated_embeddings: dict[int, np.ndarray] = field(default_factory=dict)
    graph_repaired: bool = False
    old_scores: dict[int, float] = field(default_factory=dict)
    anchor_sets: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def event(self) -> dict:
        return {
            "step": self.step,
            "delta_I": self.delta_I,
            "triggered": self.triggered,
            "recal": list(self.recal_set),
            "delta_H": self.delta_H,
            "graph_repaired": self.graph_repaired,
        }


def discrepancy_check(ledger: ScoreLedger, sample_set, t_c_window, lambda_c: float,
                      current_step: int) -> float:
    """Mean decay-weighted relative score discrepancy over the probe samples.

    Returns +inf as the distinct undefined signal when any probe sample's
    current score is zero (a collapsed denominator); an empty window yields 0.
    """
    if not 0.0 < lambda_c < 1.0:
        raise DomainError(f"lambda_c must be in (0, 1), got {lambda_c}")
    ids = sorted(int(i) for i in sample_set)
    if not ids:
        raise DomainError("sample_set must be nonempty")
    window = sorted(int(t) for t in t_c_window)
    if not window:
        return 0.0
    total = 0.0
    for i in ids:
        now = ledger.score_at(i, current_step)
        num = 0.0
        den = 0.0
        for t_k in window:
            w = lambda_c ** (t_k - current_step)
            num += w * abs(ledger.score_at(i, t_k) - now)
            den += w * now
        if den == 0.0:
            return math.inf
        total += num / den
    return total / len(ids)


def uniqueness(g: MutualKnnGraph, ledger: ScoreLedger, sample_id: int) -> float:
    """Deviation of a node's score from its weighted neighborhood mean; 0 if isolated."""
    nbrs = g.adjacency[sample_id]
    if not nbrs:
        return 0.0
    w_sum = 0.0
    acc = 0.0
    for j, w in nbrs.items():
        w_sum += w
        acc += w * ledger.current[j]
    return abs(float(ledger.current[sample_id]) - acc / w_sum)


def update_priority(g: MutualKnnGraph, ledger: ScoreLedger, sample_id: int,
                    current_step: int) -> float:
    staleness = current_step - int(ledger.t_history[sample_id])
    if staleness < 0:
        raise DomainError(f"sample {sample_id} has t_history beyond step {current_step}")
    return uniqueness(g, ledger, sample_id) * staleness


def select_recal_set(g: MutualKnnGraph, ledger: ScoreLedger, current_step: int,
                     k_recal: int) -> tuple[int, ...]:
    """Greedy highest-priority picks, skipping neighbors of already-picked nodes.

    Zero-priority candidates are never selected, so the result may be smaller
    than the budget.
    """
    if k_recal < 1:
        raise DomainError(f"k_recal must be >= 1, got {k_recal}")
    priorities = [update_priority(g, ledger, i, current_step) for i in range(g.n)]
    order = sorted(range(g.n), key=lambda i: (-priorities[i], i))
    chosen: list[int] = []
    blocked: set[int] = set()
    for i in order:
        if priorities[i] <= 0.0:
            break
        if i in blocked:
            continue
        chosen.append(i)
        blocked.update(g.adjacency[i])
        if len(chosen) == k_recal:
            break
    return tuple(sorted(chosen))


def affinity(g: MutualKnnGraph, ledger: ScoreLedger, i: int, j: int) -> float:
    """Edge weight discounted by score disagreement: w_ij * exp(-0.1|I_i - I_j|)."""
    w = g.weight(i, j)
    gap = abs(float(ledger.current[i]) - float(ledger.current[j]))
    return w * math.exp(-AFFINITY_SCORE_SCALE * gap)


def qualifying_anchor_sets(g: MutualKnnGraph, ledger: ScoreLedger, anchors,
                           beta_aff: float) -> dict[int, tuple[int, ...]]:
    """For each non-anchor: its anchor neighbors with affinity above the threshold."""
    anchor_set = set(int(a) for a in anchors)
    out: dict[int, tuple[int, ...]] = {}
    for i in range(g.n):
        if i in anchor_set:
            continue
        qualified = tuple(
            j for j in sorted(g.adjacency[i])
            if j in anchor_set and affinity(g, ledger, i, j) > beta_aff
        )
        if qualified:
            out[i] = qualified
    return out


def propagate_scores(g: MutualKnnGraph, ledger: ScoreLedger, recal_new: dict,
                     beta_aff: float) -> dict[int, float]:
    """Closed-form propagation of recomputed scores to qualified neighbors.

    Anchors keep their recomputed values verbatim. Every non-anchor with a
    nonempty qualified set N* moves to 1/2 * old + 1/2 * sum of normalized-
    weight averages of the anchors' new scores, the minimizer of
    1/2 (x - old)^2 + 1/2 * sum_j alpha_j (x - new_j)^2. Affinity gating uses
    the ledger as it stands (pre-update scores). Nothing else changes.
    """
    for a, v in recal_new.items():
        if not 0 <= int(a) < g.n:
            raise DomainError(f"anchor id {a} out of range [0, {g.n})")
        if not math.isfinite(v) or v < 0.0:
            raise DomainError(f"anchor score for {a} must be finite and >= 0, got {v!r}")
    out = {int(a): float(v) for a, v in recal_new.items()}
    for i, qualified in qualifying_anchor_sets(g, ledger, recal_new, beta_aff).items():
        w_sum = sum(g.adjacency[i][j] for j in qualified)
        blended = sum(g.adjacency[i][j] / w_sum * out[j] for j in qualified)
        out[i] = 0.5 * float(ledger.current[i]) + 0.5 * blended
    return out


def embedding_shift(old_rows: dict, new_rows: dict) -> float:
    """Mean Euclidean displacement over the recomputed samples."""
    if set(old_rows) != set(new_rows):
        raise DomainError("old and new embedding maps must share the same sample ids")
    if not old_rows:
        raise DomainError("embedding shift needs at least one sample")
    total = 0.0
    for i, old in old_rows.items():
        old = np.asarray(old, dtype=np.float64)
        new = np.asarray(new_rows[i], dtype=np.float64)
        if old.shape != new.shape:
            raise DomainError(f"sample {i} changed embedding dimension {old.shape} -> {new.shape}")
        total += float(np.linalg.norm(old - new))
    return total / len(old_rows)


def propagate_embeddings(g: MutualKnnGraph, ledger: ScoreLedger, emb: EmbeddingTable,
                         recal_new_rows: dict, beta_aff: float) -> dict[int, np.ndarray]:
    """Blend qualified neighbors halfway toward the weighted anchor average.

    Returns only the rows that change: anchors verbatim plus each non-anchor
    with a nonempty qualified set. Affinity gating and edge weights are read
    from the current graph and ledger (pre-update state).
    """
    out = {int(a): np.asarray(r, dtype=np.float64).copy() for a, r in recal_new_rows.items()}
    for i, qualified in qualifying_anchor_sets(g, ledger, recal_new_rows, beta_aff).items():
        w_sum = sum(g.adjacency[i][j] for j in qualified)
        avg = np.zeros(emb.d, dtype=np.float64)
        for j in qualified:
            avg += g.adjacency[i][j] * out[j]
        out[i] = 0.5 * emb.rows[i] + 0.5 * (avg / w_sum)
    return out


def check_and_update(g: MutualKnnGraph, emb: EmbeddingTable, ledger: ScoreLedger,
                     last_core, provider, cfg, rng: np.random.Generator,
                     lsh: LshIndex | None = None) -> tuple[UpdatePlan, MutualKnnGraph]:
    """One full adaptive check; mutates emb/ledger in place on trigger.

    Probes a sample of the last coreset, recomputes the probe's current
    scores when the ledger lacks them, and triggers on discrepancy > delta.
    A triggered check recomputes the recal set exactly, propagates scores,
    and, only when the mean embedding shift also crosses delta_h, replaces
    and propagates embeddings and locally repairs the graph. Provider errors
    leave all state untouched.
    """
    core = sorted(int(i) for i in last_core)
    if not core:
        raise DomainError("last_core must be nonempty")
    current_step = int(provider.step)
    n_probe = min(cfg.n_s_check, len(core))
    probe = sorted(int(i) for i in rng.choice(core, size=n_probe, replace=False))

    recorded: list[int] = []
    def _last(i):
        last = ledger.last_step(i)
        return -1 if last is None else last
    stale = [i for i in probe if _last(i) < current_step]
    if stale:
        _, probe_scores = provider.extract_features(stale)
        for i, s in zip(stale, probe_scores):
            ledger.record(i, current_step, float(s))
            recorded.append(i)

    window = _common_window(ledger, probe, cfg.t_c, current_step)
    delta_i = discrepancy_check(ledger, probe, window, cfg.lambda_c, current_step)
    plan = UpdatePlan(step=current_step, triggered=bool(delta_i > cfg.delta), delta_I=delta_i)
    if not plan.triggered:
        return plan, g

    recal = select_recal_set(g, ledger, current_step, cfg.k_recal)
    plan.recal_set = recal
    if not recal:
        return plan, g

    try:
        new_rows, new_scores = provider.extract_features(list(recal))
    except Exception:
        # Atomicity: drop the probe records taken this step and re-raise.
        for i in recorded:
            ledger.pop_last(i)
        raise

    recal_score_map = {i: float(s) for i, s in zip(recal, new_scores)}
    recal_row_map = {i: new_rows[pos] for pos, i in enumerate(recal)}

    plan.anchor_sets = qualifying_anchor_sets(g, ledger, recal, cfg.beta_aff)
    score_map = propagate_scores(g, ledger, recal_score_map, cfg.beta_aff)
    plan.recal_scores = recal_score_map
    plan.propagated_scores = {i: v for i, v in score_map.items() if i not in recal_score_map}
    plan.old_scores = {i: float(ledger.current[i]) for i in score_map}

    old_rows = {i: emb.rows[i].copy() for i in recal}
    plan.delta_H = embedding_shift(old_rows, recal_row_map)

    emb_map: dict[int, np.ndarray] = {}
    if plan.delta_H > cfg.delta_h:
        emb_map = propagate_embeddings(g, ledger, emb, recal_row_map, cfg.beta_aff)
        plan.propagated_embeddings = {i: r for i, r in emb_map.items() if i not in recal_score_map}

    # Apply: scores first (anchors advance t_history, propagated nodes do not).
    for i, v in score_map.items():
        ledger.record(i, current_step, v, replace=True)
    for i in recal:
        ledger.mark_accurate(i, current_step)

    new_graph = g
    if emb_map:
        for i, row in emb_map.items():
            emb.rows[i] = row
        changed = sorted(emb_map)
        if lsh is not None:
            lsh.reinsert(changed, emb)
        new_graph = repair_graph(g, lsh, emb, changed,
                                 brute_force_candidates=lsh is None)
        plan.graph_repaired = True
    return plan, new_graph


def _common_window(ledger: ScoreLedger, probe, t_c: int, current_step: int) -> list[int]:
    """Steps within the last t_c interval recorded for every probe sample."""
    lo = current_step - t_c
    common: set[int] | None = None
    for i in probe:
        steps = {s for s in ledger.steps_for(i) if lo <= s < current_step}
        common = steps if common is None else common & steps
        if not common:
            return []
    return sorted(common)
