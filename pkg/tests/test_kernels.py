"""Parity between the numba kernels and the pure-numpy fallbacks."""

import numpy as np
import pytest

from coresel import kernels
from coresel.kernels import (
    NUMBA_ENABLED,
    _greedy_select_numpy,
    _pairwise_sq_dists_numpy,
    _rows_sq_dists_numpy,
    greedy_select,
    pairwise_sq_dists,
    rows_sq_dists,
)

needs_numba = pytest.mark.skipif(not NUMBA_ENABLED, reason="numba path disabled")


def naive_pairwise(x):
    n = x.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = np.sum((x[i] - x[j]) ** 2)
    return out


def test_pairwise_matches_naive(rng):
    x = rng.normal(size=(40, 7))
    assert np.allclose(pairwise_sq_dists(x), naive_pairwise(x), atol=1e-9)


def test_pairwise_diagonal_exactly_zero(rng):
    x = rng.normal(size=(30, 5)) * 100.0
    assert np.all(np.diag(pairwise_sq_dists(x)) == 0.0)


def test_rows_sq_dists_matches_naive(rng):
    x = rng.normal(size=(25, 6))
    rows = np.array([3, 11, 24])
    full = naive_pairwise(x)
    assert np.allclose(rows_sq_dists(x, rows), full[rows], atol=1e-9)


@needs_numba
def test_pairwise_paths_agree(rng):
    x = rng.normal(size=(60, 9))
    got_nb = kernels._pairwise_sq_dists_numba(x)
    got_np = _pairwise_sq_dists_numpy(x)
    assert np.allclose(got_nb, got_np, atol=1e-9)


@needs_numba
def test_rows_paths_agree(rng):
    x = rng.normal(size=(50, 4))
    rows = np.arange(0, 50, 7, dtype=np.int64)
    assert np.allclose(
        kernels._rows_sq_dists_numba(x, rows), _rows_sq_dists_numpy(x, rows), atol=1e-9
    )


@needs_numba
@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_greedy_paths_agree(rng, lam):
    for trial in range(5):
        n = 30
        x = rng.uniform(0.05, 1.0, size=(n, 6))
        unit = x / np.linalg.norm(x, axis=1, keepdims=True)
        cos = unit @ unit.T
        warped = rng.uniform(0.0, 1.0, size=n)
        m_nb, g_nb = kernels._greedy_select_numba(cos, warped, lam, 8)
        m_np, g_np = _greedy_select_numpy(cos, warped, lam, 8)
        assert m_nb.tolist() == m_np.tolist()
        assert np.allclose(g_nb, g_np, atol=1e-9)


def test_greedy_first_pick_maximizes_column_sum(rng):
    n = 15
    x = rng.normal(size=(n, 4))
    unit = x / np.linalg.norm(x, axis=1, keepdims=True)
    cos = unit @ unit.T
    warped = np.zeros(n)
    members, gains = greedy_select(cos, warped, 1.0, 1)
    sums = cos.sum(axis=0)
    assert members[0] == int(np.argmax(sums))
    assert gains[0] == pytest.approx(sums.max())


def test_greedy_tie_breaks_to_smaller_index():
    # Two coincident directions with equal warped scores: index 0 must win.
    cos = np.ones((3, 3))
    warped = np.array([0.5, 0.5, 0.5])
    members, _ = greedy_select(cos, warped, 0.5, 2)
    assert members[0] == 0
    assert members[1] == 1
