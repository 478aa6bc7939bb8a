"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The three inner loops that dominate runtime (all-pairs squared distances,
row-subset squared distances, and the greedy marginal-gain selection loop)
each exist twice: a numba ``@njit`` version and a vectorized numpy version.
The numba path is the default; set ``CORESEL_DISABLE_NUMBA=1`` in the
environment (before import) to force the numpy fallback. Both paths produce
the same results up to floating-point summation order.

``benchmarks/bench_kernels.py`` compares the two paths side by side.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("CORESEL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

if _DISABLE:
    NUMBA_ENABLED = False
else:
    try:
        from numba import njit, prange

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):  # noqa: D103 - identity decorator stand-in
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap

    prange = range


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

# Block size (in elements) for the chunked difference tensors below; keeps
# peak memory around a few tens of MB regardless of n.
_BLOCK_ELEMS = 1 << 22


def _pairwise_sq_dists_numpy(x):
    n, d = x.shape
    out = np.empty((n, n), dtype=np.float64)
    rows_per_block = max(1, _BLOCK_ELEMS // max(n * d, 1))
    for start in range(0, n, rows_per_block):
        stop = min(n, start + rows_per_block)
        diff = x[start:stop, None, :] - x[None, :, :]
        out[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _rows_sq_dists_numpy(x, rows):
    n, d = x.shape
    m = rows.shape[0]
    out = np.empty((m, n), dtype=np.float64)
    rows_per_block = max(1, _BLOCK_ELEMS // max(n * d, 1))
    for start in range(0, m, rows_per_block):
        stop = min(m, start + rows_per_block)
        diff = x[rows[start:stop], None, :] - x[None, :, :]
        out[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _greedy_select_numpy(cos_sim, warped, lam, budget):
    n = cos_sim.shape[0]
    members = np.empty(budget, dtype=np.int64)
    gains = np.empty(budget, dtype=np.float64)
    selected = np.zeros(n, dtype=bool)
    cov = np.zeros(n, dtype=np.float64)
    for r in range(budget):
        if r == 0:
            rep_gain = cos_sim.sum(axis=0)
        else:
            rep_gain = np.maximum(cos_sim - cov[:, None], 0.0).sum(axis=0)
        total = lam * rep_gain + (1.0 - lam) * warped
        total[selected] = -np.inf
        best = int(np.argmax(total))  # first max -> smallest index on ties
        members[r] = best
        gains[r] = total[best]
        selected[best] = True
        if r == 0:
            cov[:] = cos_sim[:, best]
        else:
            np.maximum(cov, cos_sim[:, best], out=cov)
    return members, gains


# ---------------------------------------------------------------------------
# numba implementations (loop forms of the same computations)
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def _pairwise_sq_dists_numba(x):  # pragma: no cover - exercised via dispatch
    n, d = x.shape
    out = np.zeros((n, n), dtype=np.float64)
    for i in prange(n):
        for j in range(i + 1, n):
            s = 0.0
            for t in range(d):
                dv = x[i, t] - x[j, t]
                s += dv * dv
            out[i, j] = s
            out[j, i] = s
    return out


@njit(cache=True, parallel=True)
def _rows_sq_dists_numba(x, rows):  # pragma: no cover - exercised via dispatch
    n, d = x.shape
    m = rows.shape[0]
    out = np.empty((m, n), dtype=np.float64)
    for a in prange(m):
        i = rows[a]
        for j in range(n):
            s = 0.0
            for t in range(d):
                dv = x[i, t] - x[j, t]
                s += dv * dv
            out[a, j] = s
    return out


@njit(cache=True, parallel=True)
def _greedy_select_numba(cos_sim, warped, lam, budget):  # pragma: no cover
    n = cos_sim.shape[0]
    # contiguous per-candidate rows: cos_t[j, i] = cos_sim[i, j]
    cos_t = np.ascontiguousarray(cos_sim.T)
    members = np.empty(budget, dtype=np.int64)
    gains = np.empty(budget, dtype=np.float64)
    selected = np.zeros(n, dtype=np.bool_)
    cov = np.zeros(n, dtype=np.float64)
    total = np.empty(n, dtype=np.float64)
    for r in range(budget):
        for j in prange(n):
            if selected[j]:
                total[j] = -np.inf
            else:
                acc = 0.0
                if r == 0:
                    for i in range(n):
                        acc += cos_t[j, i]
                else:
                    for i in range(n):
                        diff = cos_t[j, i] - cov[i]
                        if diff > 0.0:
                            acc += diff
                total[j] = lam * acc + (1.0 - lam) * warped[j]
        best = 0
        best_val = -np.inf
        for j in range(n):
            if total[j] > best_val:
                best_val = total[j]
                best = j
        members[r] = best
        gains[r] = best_val
        selected[best] = True
        if r == 0:
            for i in range(n):
                cov[i] = cos_t[best, i]
        else:
            for i in range(n):
                c = cos_t[best, i]
                if c > cov[i]:
                    cov[i] = c
    return members, gains


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def pairwise_sq_dists(x) -> np.ndarray:
    """All-pairs squared Euclidean distances, (n, n) with an exact zero diagonal."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if NUMBA_ENABLED:
        return _pairwise_sq_dists_numba(x)
    return _pairwise_sq_dists_numpy(x)


def rows_sq_dists(x, rows) -> np.ndarray:
    """Squared distances from the given row indices to every point, (len(rows), n)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    if NUMBA_ENABLED:
        return _rows_sq_dists_numba(x, rows)
    return _rows_sq_dists_numpy(x, rows)


def greedy_select(cos_sim, warped, lam, budget) -> tuple[np.ndarray, np.ndarray]:
    """Greedy argmax of blended marginal gains over a cosine-similarity matrix.

    Returns (members, gains) as local indices into the candidate pool, in
    insertion order. Ties break toward the smaller index. The coverage term of
    the first pick is the plain column sum (the empty coreset covers nothing).
    """
    cos_sim = np.ascontiguousarray(cos_sim, dtype=np.float64)
    warped = np.ascontiguousarray(warped, dtype=np.float64)
    if NUMBA_ENABLED:
        return _greedy_select_numba(cos_sim, warped, float(lam), int(budget))
    return _greedy_select_numpy(cos_sim, warped, float(lam), int(budget))
