"""Monte Carlo law of the standardized statistic and its distance to N(0, 1).

Draws are produced in fixed-size chunks, each chunk on its own child stream,
so the merged (sorted) sample does not depend on how many threads ran.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import kernels
from .core import StratifiedMatrix, transform
from .distances import wasserstein_to_normal
from .rng import RandomSource, as_source
from .sampling import draw_swaps

__all__ = [
    "CHUNK",
    "SampleSummary",
    "default_workers",
    "run_chunked",
    "simulate_statistic",
    "ecdf_kolmogorov_vs_normal",
    "empirical_wasserstein_vs_normal",
]

CHUNK = 4096


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


@dataclass(frozen=True, eq=False)
class SampleSummary:
    draws: np.ndarray
    count: int
    empirical_mean: float
    empirical_variance: float

    @classmethod
    def from_draws(cls, draws) -> "SampleSummary":
        x = np.sort(np.asarray(draws, dtype=float))
        if x.size < 1:
            raise ValueError("a sample needs at least one draw")
        x.setflags(write=False)
        var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
        return cls(x, int(x.size), float(np.mean(x)), var)

    def to_dict(self) -> dict:
        return {"count": self.count, "empirical_mean": self.empirical_mean,
                "empirical_variance": self.empirical_variance}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self, path=None) -> str:
        """Single-column dump of the sorted draws; written to ``path`` when given."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["w"])
        w.writerows([[repr(float(v))] for v in self.draws])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "SampleSummary":
        rows = list(csv.reader(io.StringIO(text)))
        return cls.from_draws([float(r[0]) for r in rows[1:] if r])


def run_chunked(fn, m: int, rng: RandomSource, workers: int | None = None, chunk: int = CHUNK):
    """Evaluate ``fn(size, stream)`` over chunks covering ``m`` draws; returns the concatenation.

    Chunk boundaries and streams depend only on ``m`` and ``chunk``.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    n_chunks = -(-m // chunk)
    sizes = [chunk] * (n_chunks - 1) + [m - chunk * (n_chunks - 1)]
    streams = rng.spawn(n_chunks)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or n_chunks == 1:
        parts = [fn(s, r) for s, r in zip(sizes, streams)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, sizes, streams))
    return np.concatenate(parts)


def simulate_statistic(A: StratifiedMatrix, m: int, rng=None, workers: int | None = None) -> SampleSummary:
    """``m`` independent draws of the standardized statistic ``W_{A^s, pi}``.

    Raises
    ------
    DegenerateVariance
        If the statistic has zero variance.
    """
    As = transform(A, "standardize")
    data, offsets, starts, sizes = kernels.packed_blocks(As)
    layout = A.layout

    def chunk_fn(size, stream):
        return kernels.permutation_statistic(data, offsets, starts, sizes, draw_swaps(layout, size, stream))

    return SampleSummary.from_draws(run_chunked(chunk_fn, m, as_source(rng), workers))


def ecdf_kolmogorov_vs_normal(s: SampleSummary) -> float:
    x = s.draws
    m = s.count
    phi = ndtr(x)
    i = np.arange(1, m + 1)
    return float(max(np.max(np.abs(i / m - phi)), np.max(np.abs((i - 1) / m - phi))))


def empirical_wasserstein_vs_normal(s: SampleSummary) -> float:
    x, counts = np.unique(s.draws, return_counts=True)
    c = np.cumsum(counts)
    m = s.count
    return wasserstein_to_normal(x, c / m, (m - c) / m)


def mc_standard_error(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("inf")
