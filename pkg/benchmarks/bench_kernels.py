#!/usr/bin/env python3
"""Side-by-side benchmark: pure-numpy kernels vs their numba @njit versions.

Times the three hot kernels (all-pairs distances, row-subset distances, and
the greedy selection loop) on growing instances and checks that both paths
agree. JIT compilation happens in a warmup pass and is not counted.

Usage:
    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from coresel.kernels import (
    NUMBA_ENABLED,
    _greedy_select_numpy,
    _pairwise_sq_dists_numpy,
    _rows_sq_dists_numpy,
)

if not NUMBA_ENABLED:
    raise SystemExit("numba path unavailable (CORESEL_DISABLE_NUMBA set or numba missing); "
                     "nothing to compare")

from coresel.kernels import (  # noqa: E402
    _greedy_select_numba,
    _pairwise_sq_dists_numba,
    _rows_sq_dists_numba,
)


def timed(fn, *args, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return out, best


def warmup():
    x = np.random.default_rng(0).normal(size=(64, 8))
    _pairwise_sq_dists_numba(x)
    _rows_sq_dists_numba(x, np.arange(8, dtype=np.int64))
    unit = x / np.linalg.norm(x, axis=1, keepdims=True)
    _greedy_select_numba(unit @ unit.T, np.ones(64), 0.5, 8)


def main():
    rng = np.random.default_rng(7)
    print("Warming up JIT compilation...")
    t0 = time.perf_counter()
    warmup()
    print(f"compile: {time.perf_counter() - t0:.1f}s\n")

    header = f"{'kernel':<22}{'size':>16}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))

    for n, d in [(500, 16), (1000, 32), (2000, 32)]:
        x = rng.normal(size=(n, d))
        a, t_np = timed(_pairwise_sq_dists_numpy, x)
        b, t_nb = timed(_pairwise_sq_dists_numba, x)
        assert np.allclose(a, b, atol=1e-9)
        print(f"{'pairwise_sq_dists':<22}{f'n={n} d={d}':>16}"
              f"{t_np * 1e3:>12.1f}{t_nb * 1e3:>12.1f}{t_np / t_nb:>8.1f}x")

    for n, d, m in [(2000, 32, 64), (4000, 32, 128)]:
        x = rng.normal(size=(n, d))
        rows = rng.choice(n, size=m, replace=False).astype(np.int64)
        a, t_np = timed(_rows_sq_dists_numpy, x, rows)
        b, t_nb = timed(_rows_sq_dists_numba, x, rows)
        assert np.allclose(a, b, atol=1e-9)
        print(f"{'rows_sq_dists':<22}{f'n={n} m={m}':>16}"
              f"{t_np * 1e3:>12.1f}{t_nb * 1e3:>12.1f}{t_np / t_nb:>8.1f}x")

    for n, b in [(256, 64), (512, 128), (1024, 128)]:
        x = rng.uniform(0.05, 1.0, size=(n, 32))
        unit = x / np.linalg.norm(x, axis=1, keepdims=True)
        cos = unit @ unit.T
        warped = rng.uniform(size=n)
        (m_np, g_np), t_np = timed(_greedy_select_numpy, cos, warped, 0.6, b)
        (m_nb, g_nb), t_nb = timed(_greedy_select_numba, cos, warped, 0.6, b)
        assert m_np.tolist() == m_nb.tolist()
        assert np.allclose(g_np, g_nb, atol=1e-9)
        print(f"{'greedy_select':<22}{f'n={n} b={b}':>16}"
              f"{t_np * 1e3:>12.1f}{t_nb * 1e3:>12.1f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
