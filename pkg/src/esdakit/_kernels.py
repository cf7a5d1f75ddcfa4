"""Compiled permutation kernels with a pinned, splittable RNG.

Randomness is SplitMix64 (Steele, Lea & Flood's 64-bit mixing generator).
Every logical stream is an independent substream whose initial state is
``mix64(seed + (key + 1) * GOLDEN)``: conditional-permutation draws for a
region are keyed by (seed, region_index), total-randomization draws for
the global statistic by (seed, permutation_index). Because each region's
(or permutation's) draws depend only on its own substream, results are
bit-identical for any worker-thread count. Bounded draws use rejection
sampling, so they are exactly uniform.

Changing the generator, the keying, or the draw order is a
reproducibility break: pseudo p-values are part of downstream artifacts.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

# Raise the numba thread-pool cap before numba is first imported so callers
# may request more workers than physical cores (determinism never depends
# on the count; this only affects scheduling).
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(os.cpu_count() or 1, 8)))

import numpy as np
from numba import config as _numba_config
from numba import get_num_threads, njit, prange, set_num_threads

U64 = np.uint64
GOLDEN = U64(0x9E3779B97F4A7C15)
MIX_A = U64(0xBF58476D1CE4E5B9)
MIX_B = U64(0x94D049BB133111EB)
S30 = U64(30)
S27 = U64(27)
S31 = U64(31)
ZERO = U64(0)

MAX_WORKERS = int(_numba_config.NUMBA_NUM_THREADS)


def normalize_seed(seed: int) -> np.uint64:
    return U64(int(seed) & 0xFFFFFFFFFFFFFFFF)


@contextmanager
def worker_threads(workers: int | None):
    """Temporarily set the numba thread count (clamped to the pool cap)."""
    if workers is None:
        yield
        return
    previous = get_num_threads()
    set_num_threads(max(1, min(int(workers), MAX_WORKERS)))
    try:
        yield
    finally:
        set_num_threads(previous)


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> S30)) * MIX_A
    z = (z ^ (z >> S27)) * MIX_B
    return z ^ (z >> S31)


@njit(cache=True, inline="always")
def _stream_init(seed, key):
    return _mix64(seed + (key + U64(1)) * GOLDEN)


@njit(cache=True, inline="always")
def _next_u64(state):
    state = state + GOLDEN
    return _mix64(state), state


@njit(cache=True, inline="always")
def _next_below(state, bound):
    # rejection sampling: exactly uniform on [0, bound)
    threshold = (ZERO - bound) % bound
    while True:
        u, state = _next_u64(state)
        if u >= threshold:
            return u % bound, state


@njit(cache=True)
def quadratic_form(indptr, indices, wvals, zp, active_ids, active_pos):
    """sum_i z_i * sum_j w_ij z_j over active rows, z given in active order."""
    num = 0.0
    for a in range(active_ids.shape[0]):
        i = active_ids[a]
        row = 0.0
        for t in range(indptr[i], indptr[i + 1]):
            row += wvals[t] * zp[active_pos[indices[t]]]
        num += zp[a] * row
    return num


@njit(cache=True, parallel=True)
def global_permutation_nums(
    indptr, indices, wvals, z_active, active_ids, active_pos, permutations, seed
):
    """Quadratic-form numerators under total randomization of active values."""
    n_active = active_ids.shape[0]
    nums = np.empty(permutations, dtype=np.float64)
    for m in prange(permutations):
        state = _stream_init(seed, U64(m))
        zp = z_active.copy()
        for q in range(n_active - 1, 0, -1):
            r, state = _next_below(state, U64(q + 1))
            rq = np.int64(r)
            tmp = zp[q]
            zp[q] = zp[rq]
            zp[rq] = tmp
        nums[m] = quadratic_form(indptr, indices, wvals, zp, active_ids, active_pos)
    return nums


@njit(cache=True, parallel=True)
def local_permutation_counts(
    indptr, indices, wvals, zx, zy, zy_active, active_ids, permutations, seed
):
    """Conditional-permutation extremeness counts per active region.

    For region i the focal value zx[i] stays fixed while its neighbor
    positions are filled by a uniform ordered draw (without replacement)
    from the other active zy values. The count is of simulated zx_i * lag
    values at least as extreme as the observed one, toward the observed
    statistic's sign. The observed lag is returned so that callers compare
    and classify against the exact same floating-point path.
    """
    n_active = active_ids.shape[0]
    counts = np.zeros(n_active, dtype=np.int64)
    lags = np.zeros(n_active, dtype=np.float64)
    for a in prange(n_active):
        i = active_ids[a]
        start = indptr[i]
        k = np.int64(indptr[i + 1] - start)
        lag = 0.0
        for t in range(start, start + k):
            lag += wvals[t] * zy[indices[t]]
        lags[a] = lag
        obs = zx[i] * lag
        upper = obs >= 0.0
        state = _stream_init(seed, U64(i))
        chosen = np.empty(k, dtype=np.int64)
        pool = n_active - 1
        c = 0
        for _m in range(permutations):
            # Floyd's sampler: uniform k-subset of [0, pool)
            cnt = 0
            for jj in range(pool - k, pool):
                r, state = _next_below(state, U64(jj + 1))
                ri = np.int64(r)
                dup = False
                for q in range(cnt):
                    if chosen[q] == ri:
                        dup = True
                        break
                if dup:
                    chosen[cnt] = jj
                else:
                    chosen[cnt] = ri
                cnt += 1
            # Fisher-Yates: subset -> uniform ordered injection
            for q in range(k - 1, 0, -1):
                r, state = _next_below(state, U64(q + 1))
                rq = np.int64(r)
                tmp = chosen[q]
                chosen[q] = chosen[rq]
                chosen[rq] = tmp
            s = 0.0
            for t in range(k):
                d = chosen[t]
                if d >= a:
                    d += 1  # skip the focal position
                s += wvals[start + t] * zy_active[d]
            sim = zx[i] * s
            if upper:
                if sim >= obs:
                    c += 1
            else:
                if sim <= obs:
                    c += 1
        counts[a] = c
    return counts, lags


def warmup() -> None:
    """Trigger JIT compilation once so timed runs measure steady state."""
    indptr = np.array([0, 1, 3, 4], dtype=np.int64)
    indices = np.array([1, 0, 2, 1], dtype=np.int64)
    wvals = np.ones(4)
    active = np.array([0, 1, 2], dtype=np.int64)
    pos = np.array([0, 1, 2], dtype=np.int64)
    z = np.array([-1.0, 0.0, 1.0])
    seed = normalize_seed(0)
    global_permutation_nums(indptr, indices, wvals, z, active, pos, 2, seed)
    local_permutation_counts(indptr, indices, wvals, z, z, z, active, 2, seed)
    quadratic_form(indptr, indices, wvals, z, active, pos)
