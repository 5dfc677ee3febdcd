"""Random stratified permutations, Stein pairs and the zero-bias coupling.

Permutations are stored as 0-based global image arrays. Composition follows
``(pi o tau_ab)(x) = pi(tau_ab(x))``, i.e. right-multiplying by a
transposition swaps two entries of the image array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import StratifiedMatrix, StratumLayout, moments, statistic, transform
from .errors import DegenerateLayout, DegenerateVariance, InvariantViolation, StratumTooLarge
from .rng import RandomSource

__all__ = [
    "StratifiedPermutation",
    "SteinPairDraw",
    "ZeroBiasDraw",
    "AliasTable",
    "DEFAULT_TABLE_LIMIT",
    "draw_swaps",
    "sample_permutation",
    "sample_permutations",
    "stein_pair_draw",
    "zero_bias_masses",
    "pi_dagger",
    "zero_bias_draw",
]

DEFAULT_TABLE_LIMIT = 32


@dataclass(frozen=True, eq=False)
class StratifiedPermutation:
    layout: StratumLayout
    images: np.ndarray

    def __post_init__(self):
        img = np.array(self.images, dtype=np.int64, copy=True)
        n = self.layout.n
        if img.shape != (n,) or not np.array_equal(np.sort(img), np.arange(n)):
            raise InvariantViolation("bijection on {0..n-1}")
        labels = self.layout.stratum_of()
        if not np.array_equal(labels[img], labels):
            raise InvariantViolation("stratum-preserving", "pi maps a unit outside its stratum")
        img.setflags(write=False)
        object.__setattr__(self, "images", img)

    def __eq__(self, other):
        return (isinstance(other, StratifiedPermutation) and self.layout == other.layout
                and np.array_equal(self.images, other.images))

    __hash__ = object.__hash__

    def __call__(self, i: int) -> int:
        return int(self.images[i])

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.images)
        inv[self.images] = np.arange(self.images.size)
        return inv

    def transposed(self, a: int, b: int) -> "StratifiedPermutation":
        """``pi o tau_ab``."""
        img = self.images.copy()
        img[a], img[b] = img[b], img[a]
        return StratifiedPermutation(self.layout, img)

    def moved(self, other: "StratifiedPermutation") -> np.ndarray:
        return np.flatnonzero(self.images != other.images)


def draw_swaps(layout: StratumLayout, m: int, rng: RandomSource) -> np.ndarray:
    """Fisher--Yates swap targets: entry ``(d, start_k + t)`` is uniform on ``{0..t}``."""
    local = np.concatenate([np.arange(s, dtype=np.int64) for s in layout.sizes])
    return rng.integers(0, local + 1, size=(m, layout.n))


def sample_permutations(layout: StratumLayout, m: int, rng: RandomSource) -> np.ndarray:
    starts, sizes = kernels.layout_arrays(layout)
    return kernels.fisher_yates(starts, sizes, draw_swaps(layout, m, rng))


def sample_permutation(layout: StratumLayout, rng: RandomSource) -> StratifiedPermutation:
    """Uniform draw from the permutations that keep every stratum in place."""
    return StratifiedPermutation(layout, sample_permutations(layout, 1, rng)[0])


@dataclass(frozen=True)
class SteinPairDraw:
    stratum: int
    i: int
    j: int
    pi_double_prime: StratifiedPermutation
    w: float
    w_double_prime: float


def stein_pair_draw(A: StratifiedMatrix, pi: StratifiedPermutation, rng: RandomSource) -> SteinPairDraw:
    """Random within-stratum transposition ``pi'' = pi o tau_IJ``.

    The stratum is picked with probability ``(n_[k] - 1) / (n - K)``, then two
    distinct units of it uniformly.
    """
    layout = A.layout
    if layout.n == layout.K:
        raise DegenerateLayout("all strata have one unit; no transposition exists")
    weights = np.array([s - 1 for s in layout.sizes], dtype=float)
    b = int(rng.categorical(weights / weights.sum()))
    nk, start = layout.sizes[b], layout.starts[b]
    i_loc = int(rng.integers(0, nk))
    j_loc = int(rng.integers(0, nk - 1))
    if j_loc >= i_loc:
        j_loc += 1
    i, j = start + i_loc, start + j_loc
    a = A.blocks[b]
    img = pi.images
    w = statistic(A, img)
    li, lj = img[i] - start, img[j] - start
    delta = a[i_loc, lj] + a[j_loc, li] - a[i_loc, li] - a[j_loc, lj]
    return SteinPairDraw(b, i, j, pi.transposed(i, j), w, w + float(delta))


class AliasTable:
    """Walker/Vose alias structure for O(1) categorical draws."""

    def __init__(self, p):
        p = np.asarray(p, dtype=float)
        total = p.sum()
        if not total > 0:
            raise ValueError("alias table needs positive total mass")
        size = p.size
        scaled = p * (size / total)
        prob = np.ones(size)
        alias = np.arange(size)
        small = [i for i in range(size) if scaled[i] < 1.0]
        large = [i for i in range(size) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers carry mass 1 up to rounding
        for i in small + large:
            prob[i] = 1.0
        self.prob = prob
        self.alias = alias
        self.size = size

    def draw(self, rng: RandomSource) -> int:
        col = int(rng.integers(0, self.size))
        return col if rng.uniform() < self.prob[col] else int(self.alias[col])

    def implied_probabilities(self) -> np.ndarray:
        out = self.prob / self.size
        np.add.at(out, self.alias, (1.0 - self.prob) / self.size)
        return out


def zero_bias_masses(block0: np.ndarray, stratum_variance: float) -> np.ndarray:
    """Four-index mass ``(a_ip + a_jq - a_iq - a_jp)^2 / (4 n^2 (n-1) sigma_k^2)``.

    ``block0`` must be row- and column-centered. Result has shape ``(n, n, n, n)``
    indexed ``[i, j, p, q]``.
    """
    a = block0
    n = a.shape[0]
    d = a[:, None, :, None] + a[None, :, None, :] - a[:, None, None, :] - a[None, :, :, None]
    return d * d / (4.0 * n * n * (n - 1) * stratum_variance)


def pi_dagger(images: np.ndarray, i: int, j: int, p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Images of ``pi_dagger`` and ``pi_ddagger = pi_dagger o tau_ij``.

    Three-case rule: if ``q = pi(i)`` and ``p != pi(j)`` then
    ``pi o tau_{pi^-1(p), j}``; if ``q != pi(i)`` and ``p = pi(j)`` then
    ``pi o tau_{pi^-1(q), i}``; otherwise ``pi o tau_{pi^-1(p), i} o tau_{pi^-1(q), j}``.
    """
    img = np.array(images, copy=True)
    inv_p = int(np.flatnonzero(img == p)[0])
    inv_q = int(np.flatnonzero(img == q)[0])
    if q == img[i] and p != img[j]:
        img[inv_p], img[j] = img[j], img[inv_p]
    elif q != img[i] and p == img[j]:
        img[inv_q], img[i] = img[i], img[inv_q]
    else:
        img[inv_p], img[i] = img[i], img[inv_p]
        img[inv_q], img[j] = img[j], img[inv_q]
    ddag = img.copy()
    ddag[i], ddag[j] = ddag[j], ddag[i]
    return img, ddag


@dataclass(frozen=True)
class ZeroBiasDraw:
    base: StratifiedPermutation
    stratum: int
    indices: tuple[int, int, int, int]
    pi_dagger: StratifiedPermutation
    pi_ddagger: StratifiedPermutation
    u: float
    w: float
    w_dagger: float
    w_ddagger: float
    w_star: float


def _zero_bias_setup(A: StratifiedMatrix, table_limit: int):
    key = ("zero_bias", table_limit)
    if key in A._cache:
        return A._cache[key]
    mr = moments(A)
    if mr.variance <= 0:
        raise DegenerateVariance("zero-bias coupling needs positive variance")
    centered = transform(A, "center")
    tables = {}
    for k, (b, nk, r2) in enumerate(zip(centered.blocks, A.layout.sizes, mr.stratum_ratios)):
        if r2 <= 0:
            continue
        if nk > table_limit:
            raise StratumTooLarge(f"stratum {k} has {nk} units; the four-index table limit is {table_limit}")
        tables[k] = AliasTable(zero_bias_masses(b, mr.stratum_variances[k]).ravel())
    ratios = np.array(mr.stratum_ratios)
    A._cache[key] = (centered, ratios, tables)
    return A._cache[key]


def zero_bias_draw(A: StratifiedMatrix, rng: RandomSource,
                   table_limit: int = DEFAULT_TABLE_LIMIT) -> ZeroBiasDraw:
    """One draw of the zero-bias coupling of the centered statistic.

    Returns ``W* = U W(pi_dagger) + (1 - U) W(pi_ddagger)`` together with the
    permutation, the stratum, the four indices (global, ordered I, J, P, Q)
    and the two modified permutations.
    """
    centered, ratios, tables = _zero_bias_setup(A, table_limit)
    layout = A.layout
    pi = sample_permutation(layout, rng)
    k = int(rng.categorical(ratios / ratios.sum()))
    nk, start = layout.sizes[k], layout.starts[k]
    flat = tables[k].draw(rng)
    il, jl, pl, ql = np.unravel_index(flat, (nk,) * 4)
    i, j, p, q = (start + int(x) for x in (il, jl, pl, ql))
    dag, ddag = pi_dagger(pi.images, i, j, p, q)
    u = float(rng.uniform())
    w = statistic(centered, pi.images)
    wd = statistic(centered, dag)
    wdd = statistic(centered, ddag)
    w_star = wd if wd == wdd else u * wd + (1.0 - u) * wdd
    return ZeroBiasDraw(
        base=pi,
        stratum=k,
        indices=(i, j, p, q),
        pi_dagger=StratifiedPermutation(layout, dag),
        pi_ddagger=StratifiedPermutation(layout, ddag),
        u=u,
        w=w,
        w_dagger=wd,
        w_ddagger=wdd,
        w_star=w_star,
    )
