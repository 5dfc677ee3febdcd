"""Stratum layouts, stratified matrices and exact moments of the statistic.

A stratified matrix stores only the K square diagonal blocks; entries that
couple two different strata never enter ``W = sum_i a[i, pi(i)]`` because
``pi`` maps every stratum onto itself.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateVariance, InvariantViolation

__all__ = [
    "StratumLayout",
    "StratifiedMatrix",
    "MomentReport",
    "moments",
    "transform",
    "finite_pop_moment",
    "statistic",
    "TRANSFORM_MODES",
]

TRANSFORM_MODES = ("center", "standardize", "column_center", "truncate")


@dataclass(frozen=True)
class StratumLayout:
    """Partition of ``n`` units into ``K`` contiguous strata.

    Units are 0-based; stratum ``k`` owns indices ``starts[k] .. starts[k] + sizes[k] - 1``.
    """

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 1:
            raise InvariantViolation("K >= 1", "a layout needs at least one stratum")
        if any(s < 1 for s in sizes):
            raise InvariantViolation("n_[k] >= 1", f"stratum sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def starts(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.sizes:
            out.append(acc)
            acc += s
        return tuple(out)

    @property
    def index_ranges(self) -> tuple[range, ...]:
        return tuple(range(st, st + s) for st, s in zip(self.starts, self.sizes))

    def stratum_of(self) -> np.ndarray:
        """Stratum label of every unit."""
        return np.repeat(np.arange(self.K), self.sizes)

    def min_size(self) -> int:
        return min(self.sizes)


def _as_block(b, k=None) -> np.ndarray:
    arr = np.array(b, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvariantViolation("square blocks", f"block {k} has shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation("finite entries", f"block {k} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StratifiedMatrix:
    """Block-diagonal matrix ``A = diag{A_[1], ..., A_[K]}``.

    Parameters
    ----------
    layout : StratumLayout
    blocks : sequence of array_like
        Block ``k`` has shape ``(n_[k], n_[k])``.
    """

    layout: StratumLayout
    blocks: tuple[np.ndarray, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        blocks = tuple(_as_block(b, k) for k, b in enumerate(self.blocks))
        if len(blocks) != self.layout.K:
            raise InvariantViolation(
                "one block per stratum", f"{len(blocks)} blocks for {self.layout.K} strata"
            )
        for k, (b, s) in enumerate(zip(blocks, self.layout.sizes)):
            if b.shape != (s, s):
                raise InvariantViolation(
                    "block k dimensions equal (n_[k], n_[k])",
                    f"block {k} has shape {b.shape}, expected {(s, s)}",
                )
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_blocks(cls, blocks: Sequence) -> "StratifiedMatrix":
        arrs = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
        return cls(StratumLayout(tuple(a.shape[0] for a in arrs)), tuple(arrs))

    @classmethod
    def from_dense(cls, a, layout: StratumLayout) -> "StratifiedMatrix":
        """Keep only the diagonal blocks of a dense ``n x n`` matrix."""
        a = np.asarray(a, dtype=float)
        if a.shape != (layout.n, layout.n):
            raise InvariantViolation("n x n input", f"expected {(layout.n, layout.n)}, got {a.shape}")
        return cls(layout, tuple(a[r.start:r.stop, r.start:r.stop] for r in layout.index_ranges))

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def K(self) -> int:
        return self.layout.K

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for r, b in zip(self.layout.index_ranges, self.blocks):
            out[r.start:r.stop, r.start:r.stop] = b
        return out

    def map_blocks(self, fn) -> "StratifiedMatrix":
        return StratifiedMatrix(self.layout, tuple(fn(b) for b in self.blocks))

    def scaled(self, c: float) -> "StratifiedMatrix":
        return self.map_blocks(lambda b: c * b)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(b))) for b in self.blocks)

    def allclose(self, other: "StratifiedMatrix", atol=1e-12, rtol=0.0) -> bool:
        return self.layout == other.layout and all(
            np.allclose(a, b, atol=atol, rtol=rtol) for a, b in zip(self.blocks, other.blocks)
        )

    def __eq__(self, other):
        if not isinstance(other, StratifiedMatrix):
            return NotImplemented
        return self.layout == other.layout and all(
            np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks)
        )

    __hash__ = object.__hash__

    # JSON: {"sizes": [...], "blocks": [[[...]]]}, row-major per block
    def to_dict(self) -> dict:
        return {"sizes": list(self.layout.sizes), "blocks": [b.tolist() for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> "StratifiedMatrix":
        if "blocks" not in d:
            raise InvariantViolation("blocks field", "matrix JSON needs a 'blocks' field")
        blocks = [np.asarray(b, dtype=float).reshape(len(b), -1) if len(b) else np.zeros((0, 0))
                  for b in d["blocks"]]
        sizes = d.get("sizes", [b.shape[0] for b in blocks])
        return cls(StratumLayout(tuple(sizes)), tuple(blocks))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StratifiedMatrix":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MomentReport:
    """Exact mean and variance of ``W_{A,pi}`` plus per-stratum pieces.

    ``stratum_ratios``, ``stratum_beta`` and ``third_moment_rate`` are ``None``
    when the variance is zero.
    """

    mean: float
    variance: float
    stratum_variances: tuple[float, ...]
    stratum_ratios: tuple[float, ...] | None
    stratum_beta: tuple[float, ...] | None
    third_moment_rate: float | None

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "stratum_variances": list(self.stratum_variances),
            "stratum_ratios": None if self.stratum_ratios is None else list(self.stratum_ratios),
            "stratum_beta": None if self.stratum_beta is None else list(self.stratum_beta),
            "third_moment_rate": self.third_moment_rate,
        }


def _center_block(b: np.ndarray) -> np.ndarray:
    return b - b.mean(axis=1, keepdims=True) - b.mean(axis=0, keepdims=True) + b.mean()


def moments(A: StratifiedMatrix) -> MomentReport:
    mean = 0.0
    svars, cubes = [], []
    for b, nk in zip(A.blocks, A.layout.sizes):
        mean += nk * float(b.mean())
        a0 = _center_block(b)
        # n_[k] = 1: the single centered entry is identically zero
        svars.append(float(np.sum(a0 * a0)) / (nk - 1) if nk > 1 else 0.0)
        cubes.append(float(np.sum(np.abs(a0) ** 3)) if nk > 1 else 0.0)
    variance = math.fsum(svars)
    if variance <= 0.0:
        return MomentReport(mean, 0.0, tuple(svars), None, None, None)
    sigma3 = variance ** 1.5
    beta = tuple(c / sigma3 for c in cubes)
    ratios = tuple(v / variance for v in svars)
    rate = math.fsum(bk / nk for bk, nk in zip(beta, A.layout.sizes))
    return MomentReport(mean, variance, tuple(svars), ratios, beta, rate)


def _require_sigma(A: StratifiedMatrix) -> float:
    var = moments(A).variance
    if var <= 0.0:
        raise DegenerateVariance("the statistic has zero variance")
    return math.sqrt(var)


def transform(A: StratifiedMatrix, mode: str) -> StratifiedMatrix:
    """Centering, standardization, column-demeaning or truncation of ``A``.

    ``truncate`` acts on the standardized matrix and keeps entries with
    absolute value at most 1/2 (the boundary value is retained).
    """
    if mode == "center":
        return A.map_blocks(_center_block)
    if mode == "column_center":
        return A.map_blocks(lambda b: b - b.mean(axis=0, keepdims=True))
    if mode in ("standardize", "truncate"):
        sigma = _require_sigma(A)
        std = A.map_blocks(lambda b: _center_block(b) / sigma)
        if mode == "standardize":
            return std
        return std.map_blocks(lambda b: np.where(np.abs(b) <= 0.5, b, 0.0))
    raise ValueError(f"unknown transform mode {mode!r}; expected one of {TRANSFORM_MODES}")


def finite_pop_moment(values: Iterable[float], r: int) -> float:
    """Average ``r``-th absolute deviation from the mean, ``n^-1 sum |y_i - ybar|^r``."""
    y = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if y.size == 0:
        raise ValueError("finite_pop_moment needs at least one value")
    if r < 1:
        raise ValueError("r must be a positive integer")
    return float(np.mean(np.abs(y - y.mean()) ** r))


def statistic(A: StratifiedMatrix, images) -> float:
    """Evaluate ``W_{A,pi} = sum_i a[i, pi(i)]`` for 0-based global images."""
    images = np.asarray(images)
    total = []
    for r, b in zip(A.layout.index_ranges, A.blocks):
        local = images[r.start:r.stop] - r.start
        total.append(b[np.arange(b.shape[0]), local])
    return math.fsum(np.concatenate(total))
