"""Uniform sampling of injective index tuples."""

import functools
import itertools
import math

import numba
import numpy as np


@numba.njit(cache=True)
def _partial_shuffle(perm, u, out):
    # Each row is a partial Fisher-Yates pass over the running permutation.
    # A pass is uniform whatever state ``perm`` starts in, so the state is kept.
    n = perm.size
    n_draws, m = u.shape
    for b in range(n_draws):
        for k in range(m):
            j = k + min(int(u[b, k] * (n - k)), n - k - 1)
            tmp = perm[k]
            perm[k] = perm[j]
            perm[j] = tmp
            out[b, k] = perm[k]


class TupleSampler:
    """Draws uniform injective ``m``-tuples from ``{0, ..., n-1}``.

    ``perm`` is private state; two samplers built from equal generators
    produce equal tuple streams.
    """

    def __init__(self, n, m, rng):
        if not 1 <= m <= n:
            raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
        self.n, self.m, self.rng = n, m, rng
        self.perm = np.arange(n, dtype=np.int64)

    def draw(self, size):
        # offsets come from 53-bit uniforms; the non-uniformity is below n * 2**-53
        u = self.rng.random((size, self.m))
        out = np.empty((size, self.m), dtype=np.int64)
        _partial_shuffle(self.perm, u, out)
        return out


@numba.njit(cache=True)
def weighted_sums(X, idx, beta):
    """``S[b] = sum_r beta[r] * X[idx[b, r]]``."""
    n_draws, m = idx.shape
    out = np.empty(n_draws)
    for b in range(n_draws):
        acc = 0.0
        for r in range(m):
            acc += beta[r] * X[idx[b, r]]
        out[b] = acc
    return out


@numba.njit(cache=True)
def deposit(idx, values, bucket_sum, counts):
    """Add ``values[b]`` to bucket ``(idx[b, r], r)`` for every slot ``r``."""
    n_draws, m = idx.shape
    for b in range(n_draws):
        v = values[b]
        for r in range(m):
            j = idx[b, r]
            bucket_sum[j, r] += v
            counts[j, r] += 1


@functools.lru_cache(maxsize=8)
def _all_tuples(n, m):
    arr = np.fromiter(
        itertools.chain.from_iterable(itertools.permutations(range(n), m)),
        dtype=np.int64,
        count=math.perm(n, m) * m,
    ).reshape(-1, m)
    arr.setflags(write=False)
    return arr


def all_injective_tuples(n, m):
    """Every injective ``m``-tuple from ``{0, ..., n-1}`` in lexicographic order."""
    return _all_tuples(int(n), int(m))
