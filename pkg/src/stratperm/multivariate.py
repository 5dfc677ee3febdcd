"""Vector-valued stratified permutation statistics.

``Gamma = (W_{G_1,pi}, ..., W_{G_H,pi})`` for matrices sharing one layout and
one permutation. The stratified inner product
``<G, H>_K = sum_k (n_[k] - 1)^-1 sum_ij g_ij h_ij`` gives the covariance of
the components when they are centered.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .bounds import BoundReport, _raw_report, _regime, theta
from .core import StratifiedMatrix, StratumLayout, transform
from .errors import DegenerateVariance, DomainError, LayoutMismatch, NotStandardized, SingularCovariance
from .montecarlo import run_chunked
from .rng import as_source
from .sampling import draw_swaps

__all__ = [
    "MultiStatistic",
    "inner_product_K",
    "gram_matrix",
    "standardize_multi",
    "rate_linear_combination",
    "rate_convex_sets",
    "simulate_multi",
]

EIGEN_FLOOR = 1e-10
S1_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class MultiStatistic:
    layout: StratumLayout
    components: tuple[StratifiedMatrix, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a multivariate statistic needs at least one component")
        for c in comps:
            if c.layout != self.layout:
                raise LayoutMismatch("every component must share the statistic's layout")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_components(cls, components) -> "MultiStatistic":
        comps = tuple(components)
        return cls(comps[0].layout, comps)

    @property
    def H(self) -> int:
        return len(self.components)

    def combination(self, b) -> StratifiedMatrix:
        """``sum_h b_h G_h``."""
        b = np.asarray(b, dtype=float)
        blocks = tuple(sum(bh * c.blocks[k] for bh, c in zip(b, self.components)) for k in range(self.layout.K))
        return StratifiedMatrix(self.layout, blocks)

    def to_dict(self) -> dict:
        return {"sizes": list(self.layout.sizes),
                "components": [c.to_dict()["blocks"] for c in self.components]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MultiStatistic":
        layout = StratumLayout(tuple(d["sizes"]))
        comps = []
        for blocks in d["components"]:
            m = StratifiedMatrix.from_dict({"sizes": d["sizes"], "blocks": blocks})
            comps.append(m)
        return cls(layout, tuple(comps))

    @classmethod
    def from_json(cls, text: str) -> "MultiStatistic":
        return cls.from_dict(json.loads(text))


def inner_product_K(g: StratifiedMatrix, h: StratifiedMatrix) -> float:
    """Stratified inner product; strata with one unit contribute nothing.

    The raw formula is applied to whatever is passed. It equals
    ``cov(W_g, W_h)`` only for centered inputs.
    """
    if g.layout != h.layout:
        raise LayoutMismatch("inner product needs a shared layout")
    return math.fsum(
        float(np.sum(a * b)) / (nk - 1)
        for a, b, nk in zip(g.blocks, h.blocks, g.layout.sizes) if nk > 1
    )


def gram_matrix(m: MultiStatistic) -> np.ndarray:
    H = m.H
    V = np.empty((H, H))
    for i in range(H):
        for j in range(i, H):
            V[i, j] = V[j, i] = inner_product_K(m.components[i], m.components[j])
    return V


def standardize_multi(m: MultiStatistic) -> MultiStatistic:
    """Mix the centered components with the symmetric ``V^{-1/2}``.

    Raises
    ------
    SingularCovariance
        If the smallest eigenvalue of ``V`` is at most ``1e-10`` times the largest.
    """
    centered = MultiStatistic(m.layout, tuple(transform(c, "center") for c in m.components))
    V = gram_matrix(centered)
    evals, evecs = np.linalg.eigh(V)
    if evals[-1] <= 0 or evals[0] <= EIGEN_FLOOR * evals[-1]:
        raise SingularCovariance(
            f"covariance is singular (eigenvalues {evals[0]:.3g} .. {evals[-1]:.3g})"
        )
    T = (evecs / np.sqrt(evals)) @ evecs.T
    return MultiStatistic(m.layout, tuple(centered.combination(row) for row in T))


def _check_s1(m: MultiStatistic, tol: float = S1_TOL):
    for c in m.components:
        for b in c.blocks:
            if b.shape[0] > 1 and (np.max(np.abs(b.sum(axis=0))) > tol or np.max(np.abs(b.sum(axis=1))) > tol):
                raise NotStandardized("components are not centered")
    gap = float(np.max(np.abs(gram_matrix(m) - np.eye(m.H))))
    if gap > tol:
        raise NotStandardized(f"Gram matrix differs from the identity by {gap:.3g}")


def rate_linear_combination(m: MultiStatistic, b, constant_override: float = 1.0) -> BoundReport:
    """Rate for ``b^T Gamma``: the largest ``|sum_h b_h g_h,ij|`` over all entries.

    Raises
    ------
    DomainError
        If ``b`` is not a unit vector of length ``H``.
    NotStandardized
        If the components are not centered and orthonormal under ``<.,.>_K``.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (m.H,) or abs(float(np.linalg.norm(b)) - 1.0) > 1e-12:
        raise DomainError("b must be a unit vector of length H")
    _check_s1(m)
    comb = m.combination(b)
    q = comb.max_abs()
    try:
        th = theta(comb) if m.layout.min_size() >= 6 else None
    except DegenerateVariance:
        th = None
    regime, delta = _regime(th, m.layout)
    return _raw_report("linear_combination", q, delta, th, regime, constant_override)


def rate_convex_sets(h_dim: int, b_n: float, n: int, k_strata: int) -> float:
    """Four-term rate for the distance over convex sets (constant taken as 1)."""
    if not (n > k_strata >= 1):
        raise DomainError("need n > K >= 1")
    if h_dim < 1 or b_n < 0:
        raise DomainError("need H >= 1 and B_n >= 0")
    H, B = float(h_dim), float(b_n)
    return (H ** 3.25 * B * (n * B * B + k_strata) + H ** 0.75 * B
            + H ** 1.625 * (n - k_strata) ** 0.25 * B ** 1.5
            + H ** 1.375 * (n - k_strata) ** 0.5 * B * B)


def simulate_multi(m: MultiStatistic, reps: int, rng=None, workers: int | None = None) -> np.ndarray:
    """``(reps, H)`` draws of ``Gamma`` under one shared permutation per draw."""
    packed = [kernels.packed_blocks(c) for c in m.components]
    layout = m.layout

    def chunk_fn(size, stream):
        swaps = draw_swaps(layout, size, stream)
        return np.stack([kernels.permutation_statistic(*p, swaps) for p in packed], axis=1)

    return run_chunked(chunk_fn, reps, as_source(rng), workers)
