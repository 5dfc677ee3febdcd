"""Numpy fallback for the compiled kernels in ``_kernels.pyx`` (same signatures)."""
from itertools import permutations

import numpy as np


def _local_perms(starts, sizes, swaps):
    m, n = swaps.shape
    perm = np.empty((m, n), dtype=np.int64)
    rows = np.arange(m)
    for s, nk in zip(starts, sizes):
        s, nk = int(s), int(nk)
        perm[:, s:s + nk] = np.arange(nk)
        for t in range(nk - 1, 0, -1):
            j = s + swaps[:, s + t]
            tmp = perm[:, s + t].copy()
            perm[:, s + t] = perm[rows, j]
            perm[rows, j] = tmp
    return perm


def fisher_yates(starts, sizes, swaps):
    perm = _local_perms(starts, sizes, swaps)
    base = np.repeat(np.asarray(starts, dtype=np.int64), np.asarray(sizes, dtype=np.int64))
    return perm + base


def permutation_statistic(data, offsets, starts, sizes, swaps):
    perm = _local_perms(starts, sizes, swaps)
    sizes = np.asarray(sizes, dtype=np.int64)
    local = np.concatenate([np.arange(nk) for nk in sizes])
    row_base = np.repeat(np.asarray(offsets, dtype=np.int64), sizes) + local * np.repeat(sizes, sizes)
    return np.asarray(data)[row_base + perm].sum(axis=1)


def product_statistic(r, z, starts, sizes, swaps):
    images = fisher_yates(starts, sizes, swaps)
    return (np.asarray(r)[None, :] * np.asarray(z)[images]).sum(axis=1)


def perm_sums(block):
    block = np.asarray(block)
    n = block.shape[0]
    rows = np.arange(n)
    perms = np.array(list(permutations(range(n))), dtype=np.int64).reshape(-1, n)
    return block[rows, perms].sum(axis=1)
