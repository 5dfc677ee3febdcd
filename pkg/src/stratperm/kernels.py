"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``STRATPERM_PURE`` is set to a non-empty value other
than ``0``, the numpy fallback is used. ``BACKEND`` names the active one.
"""
import os

import numpy as np

from . import _kernels_py as pure

compiled = None
if os.environ.get("STRATPERM_PURE", "") in ("", "0"):
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else pure
BACKEND = "compiled" if compiled is not None else "python"


def packed_blocks(A):
    """Flatten the blocks of a StratifiedMatrix for the kernels (cached on ``A``)."""
    key = "packed"
    if key not in A._cache:
        sizes = np.asarray(A.layout.sizes, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes * sizes)[:-1]]).astype(np.int64)
        data = np.ascontiguousarray(np.concatenate([b.ravel() for b in A.blocks]), dtype=np.float64)
        starts = np.asarray(A.layout.starts, dtype=np.int64)
        A._cache[key] = (data, offsets, starts, sizes)
    return A._cache[key]


def layout_arrays(layout):
    return (np.asarray(layout.starts, dtype=np.int64), np.asarray(layout.sizes, dtype=np.int64))


def fisher_yates(starts, sizes, swaps, impl=None):
    return (impl or _impl).fisher_yates(starts, sizes, np.ascontiguousarray(swaps, dtype=np.int64))


def permutation_statistic(data, offsets, starts, sizes, swaps, impl=None):
    return (impl or _impl).permutation_statistic(
        data, offsets, starts, sizes, np.ascontiguousarray(swaps, dtype=np.int64)
    )


def product_statistic(r, z, starts, sizes, swaps, impl=None):
    return (impl or _impl).product_statistic(
        np.ascontiguousarray(r, dtype=np.float64),
        np.ascontiguousarray(z, dtype=np.float64),
        starts,
        sizes,
        np.ascontiguousarray(swaps, dtype=np.int64),
    )


def perm_sums(block, impl=None):
    return (impl or _impl).perm_sums(np.ascontiguousarray(block, dtype=np.float64))
