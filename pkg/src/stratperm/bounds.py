"""Berry--Esseen rate quantities for stratified permutation statistics.

The Kolmogorov-distance results only assert that universal constants exist,
so every report here carries the rate quantity, its exponent and the regime
diagnostic ``theta``. A numeric value is labelled *certified* only for the
Wasserstein bound, whose constant (160) is explicit.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .core import StratifiedMatrix, StratumLayout, moments, transform
from .errors import DegenerateVariance, DomainError, InvariantViolation, ZeroStratumRatio

__all__ = [
    "BoundReport",
    "WASSERSTEIN_CONSTANT",
    "f_value",
    "theta",
    "rate",
    "wasserstein_bound",
    "kolmogorov_from_wasserstein",
    "rate_product",
    "product_matrix",
    "RATE_METHODS",
]

WASSERSTEIN_CONSTANT = 160.0
RATE_METHODS = ("theorem1", "independent", "wasserstein_combine", "columnwise")
_ALWAYS_LINEAR = ("independent", "wasserstein")


@dataclass(frozen=True)
class BoundReport:
    """Rate quantity of a normal-approximation bound plus regime metadata.

    ``certified_bound`` is populated only in ``explicit`` mode. In
    ``reported_raw`` mode ``convenience_bound = constant_override * rate**delta``
    is an uncertified number for orientation only. For the two-regime bounds
    ``branches`` holds the convenience value of each branch (``classic`` is
    ``None`` when its conditions fail); neither is preferred.
    """

    method: str
    rate_quantity: float
    exponent_delta: float
    theta: float | None
    regime: str
    constant_mode: str = "reported_raw"
    certified_bound: float | None = None
    constant_override: float = 1.0
    convenience_bound: float | None = None
    branches: dict | None = None

    def __post_init__(self):
        if self.regime not in ("general", "classic"):
            raise InvariantViolation("regime in {general, classic}", self.regime)
        if self.exponent_delta not in (0.5, 1.0):
            raise InvariantViolation("delta in {1/2, 1}", str(self.exponent_delta))
        # the independent-sum and Wasserstein bounds have exponent 1 in every regime
        if (self.exponent_delta == 1.0 and self.regime != "classic"
                and self.method not in _ALWAYS_LINEAR):
            raise InvariantViolation("delta = 1 only in the classic regime")
        if (self.certified_bound is not None) != (self.constant_mode == "explicit"):
            raise InvariantViolation("certified_bound present iff constant_mode = explicit")
        if not self.constant_override > 0:
            raise InvariantViolation("constant_override > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def f_value(n_k: int, r_squared: float) -> float:
    """Regime function of a stratum with ``n_k >= 6`` units and variance share ``r_squared``."""
    if n_k < 6:
        raise DomainError(f"f is defined for n_k >= 6, got {n_k}")
    n = float(n_k)
    r2 = float(r_squared)
    # tolerate rounding just above 1 from summed variance shares
    if not -1e-12 <= r2 <= 1.0 + 1e-12:
        raise DomainError(f"r_squared must lie in [0, 1], got {r2}")
    r2 = min(max(r2, 0.0), 1.0)
    d5 = (n - 5.0) ** 2
    return (
        0.5
        - 24.0 * n * r2 / d5
        - 4.0 * math.sqrt(1.0 + (28.0 * n - 20.0) * r2 / d5) * math.sqrt(n * r2 / (n - 4.0) ** 2)
    )


def _theta_from_truncated(truncated: StratifiedMatrix) -> float | None:
    layout = truncated.layout
    if layout.min_size() < 6:
        return None
    mr = moments(truncated)
    if mr.stratum_ratios is None:
        return None
    return min(f_value(nk, r2) for nk, r2 in zip(layout.sizes, mr.stratum_ratios))


def theta(A: StratifiedMatrix) -> float | None:
    """Minimum regime function over strata, computed on the truncated matrix.

    Returns ``None`` when some stratum has fewer than 6 units or when the
    truncation removes all variability.
    """
    truncated = transform(A, "truncate")  # raises DegenerateVariance
    return _theta_from_truncated(truncated)


def _regime(th: float | None, layout: StratumLayout) -> tuple[str, float]:
    if th is not None and layout.min_size() >= 6 and th > 0:
        return "classic", 1.0
    return "general", 0.5


def _raw_report(method, q, delta, th, regime, constant_override) -> BoundReport:
    return BoundReport(
        method=method,
        rate_quantity=float(q),
        exponent_delta=delta,
        theta=th,
        regime=regime,
        constant_mode="reported_raw",
        certified_bound=None,
        constant_override=float(constant_override),
        convenience_bound=float(constant_override) * float(q) ** delta,
    )


def rate(A: StratifiedMatrix, method: str = "theorem1", constant_override: float = 1.0) -> BoundReport:
    """Rate quantity of one of the matrix-level Berry--Esseen bounds.

    Parameters
    ----------
    method : {'theorem1', 'independent', 'wasserstein_combine', 'columnwise'}
        ``theorem1`` is the stratified bound with third moments over ``n_[k]``,
        ``independent`` treats strata as independent summands,
        ``wasserstein_combine`` sums per-stratum bounds weighted by variance share,
        ``columnwise`` uses column-demeaned entries.
    """
    if method not in RATE_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {RATE_METHODS}")
    mr = moments(A)
    if mr.variance <= 0:
        raise DegenerateVariance("rate needs a non-degenerate statistic")
    sizes = A.layout.sizes
    sigma = math.sqrt(mr.variance)
    std = transform(A, "standardize")
    cubes = [float(np.sum(np.abs(b) ** 3)) for b in std.blocks]

    if method == "independent":
        q = math.fsum(nk * c for nk, c in zip(sizes, cubes))
        th = _theta_from_truncated(std.map_blocks(lambda b: np.where(np.abs(b) <= 0.5, b, 0.0)))
        regime, _ = _regime(th, A.layout)
        return _raw_report(method, q, 1.0, th, regime, constant_override)

    if method == "wasserstein_combine":
        ratios = mr.stratum_ratios
        if any(r2 <= 0 for r2 in ratios):
            raise ZeroStratumRatio("some stratum has zero variance share")
        q = math.fsum(c / (nk * r2) for c, nk, r2 in zip(cubes, sizes, ratios))
        return _raw_report(method, q, 0.5, None, "general", constant_override)

    th = _theta_from_truncated(std.map_blocks(lambda b: np.where(np.abs(b) <= 0.5, b, 0.0)))
    regime, delta = _regime(th, A.layout)
    if method == "theorem1":
        q = math.fsum(c / nk for c, nk in zip(cubes, sizes))
    else:
        col = transform(A, "column_center")
        q = math.fsum(
            float(np.sum(np.abs(b) ** 3)) / (sigma ** 3 * nk) for b, nk in zip(col.blocks, sizes)
        )
    c = float(constant_override)
    return replace(_raw_report(method, q, delta, th, regime, constant_override),
                   branches={"general": c * math.sqrt(q), "classic": c * q if regime == "classic" else None})


def wasserstein_bound(A: StratifiedMatrix) -> BoundReport:
    """Explicit bound ``d_W(W_std, N(0,1)) <= 160 * sum_k sum_ij |a^s_ij|^3 / n_[k]``."""
    mr = moments(A)
    if mr.variance <= 0:
        raise DegenerateVariance("wasserstein_bound needs a non-degenerate statistic")
    q = mr.third_moment_rate
    th = theta(A)
    regime, _ = _regime(th, A.layout)
    return BoundReport(
        method="wasserstein",
        rate_quantity=q,
        exponent_delta=1.0,
        theta=th,
        regime=regime,
        constant_mode="explicit",
        certified_bound=WASSERSTEIN_CONSTANT * q,
    )


def kolmogorov_from_wasserstein(d_w: float) -> float:
    """``d_K <= (2/pi)^{1/4} sqrt(d_W)`` for a law against the standard normal."""
    if d_w < 0:
        raise DomainError("d_w must be nonnegative")
    return (2.0 / math.pi) ** 0.25 * math.sqrt(d_w)


def product_matrix(z: Sequence[float], r: Sequence[float], layout: StratumLayout) -> StratifiedMatrix:
    """Matrix with entries ``r_i * z_j`` so that ``W_{A,pi} = sum_i r_i z_{pi(i)}``."""
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    if z.shape != (layout.n,) or r.shape != (layout.n,):
        raise InvariantViolation("z and r have length n")
    return StratifiedMatrix(
        layout, tuple(np.outer(r[g.start:g.stop], z[g.start:g.stop]) for g in layout.index_ranges)
    )


def rate_product(z, r, layout: StratumLayout, constant_override: float = 1.0) -> BoundReport:
    """Rate for the product-form statistic ``Z_pi^T R`` from finite-population moments."""
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    if z.shape != (layout.n,) or r.shape != (layout.n,):
        raise InvariantViolation("z and r have length n")
    var_terms, rate_terms = [], []
    for g in layout.index_ranges:
        nk = g.stop - g.start
        dz = z[g] - z[g].mean()
        dr = r[g] - r[g].mean()
        if nk > 1:
            var_terms.append(float(np.sum(dz ** 2)) * float(np.sum(dr ** 2)) / (nk - 1))
        rate_terms.append(nk * float(np.mean(np.abs(dz) ** 3)) * float(np.mean(np.abs(dr) ** 3)))
    var = math.fsum(var_terms)
    if var <= 0:
        raise DegenerateVariance("product statistic has zero variance")
    sigma = math.sqrt(var)
    q = math.fsum(rate_terms) / sigma ** 3
    th = None
    if layout.min_size() >= 6:
        th = theta(product_matrix(z, r, layout))
    regime, delta = _regime(th, layout)
    return _raw_report("product", q, delta, th, regime, constant_override)
