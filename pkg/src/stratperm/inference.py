"""Stratified permutation tests under the sharp null and IV test inversion.

The test statistic is ``Z^T R``; its reference law is that of ``Z_pi^T R``
with ``pi`` uniform over within-stratum permutations. Vectors are in layout
order (units grouped by stratum).
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import kernels
from .bounds import BoundReport, rate_product
from .core import StratumLayout
from .errors import DegenerateScores, DegenerateVariance, EmptyInterval, InvariantViolation
from .montecarlo import run_chunked
from .oracle import DEFAULT_BUDGET, _check_budget, dedupe_atoms
from .rng import RandomSource, as_source
from .sampling import draw_swaps

__all__ = [
    "ALTERNATIVES",
    "METHODS",
    "TestResult",
    "ConfidenceSet",
    "permutation_test",
    "iv_test",
    "iv_confidence_interval",
]

ALTERNATIVES = ("greater", "less", "two_sided")
METHODS = ("exact", "monte_carlo", "normal_approx")
DEFAULT_REPS = 10_000
TIE_TOL = 1e-10


@dataclass
class TestResult:
    """Outcome of a stratified permutation test.

    For the exact method ``p_numerator / p_denominator`` is the one-sided
    tail count over distinct within-stratum assignments.
    """

    __test__ = False  # not a pytest class

    observed: float
    p_value: float
    method: str
    reps: int
    rate_report: BoundReport | None
    alternative: str
    p_greater: float
    p_less: float
    p_numerator: int | None = None
    p_denominator: int | None = None
    degenerate: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "observed": self.observed,
            "p_value": self.p_value,
            "method": self.method,
            "reps": self.reps,
            "alternative": self.alternative,
            "p_greater": self.p_greater,
            "p_less": self.p_less,
            "p_numerator": self.p_numerator,
            "p_denominator": self.p_denominator,
            "degenerate": self.degenerate,
            "rate_report": None if self.rate_report is None else self.rate_report.to_dict(),
            **self.extra,
        }


def _check_inputs(z, r, layout: StratumLayout):
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    if z.shape != (layout.n,) or r.shape != (layout.n,):
        raise InvariantViolation("z and r have length n")
    if not np.all((z == 0) | (z == 1)):
        raise InvariantViolation("z is binary")
    if not np.all(np.isfinite(r)):
        raise InvariantViolation("scores are finite")
    return z, r


def _combine(p_greater, p_less, alternative):
    if alternative == "greater":
        return p_greater
    if alternative == "less":
        return p_less
    return min(1.0, 2.0 * min(p_greater, p_less))


def _reference_variance(z, r, layout) -> float:
    total = []
    for g in layout.index_ranges:
        nk = g.stop - g.start
        if nk > 1:
            dz = z[g] - z[g].mean()
            dr = r[g] - r[g].mean()
            total.append(float(dz @ dz) * float(dr @ dr) / (nk - 1))
    return math.fsum(total)


def _reference_mean(z, r, layout) -> float:
    return math.fsum((g.stop - g.start) * float(z[g].mean()) * float(r[g].mean()) for g in layout.index_ranges)


def _exact_law(z, r, layout, budget):
    """Distinct values of ``Z_pi^T R`` with integer assignment counts."""
    n_assign = math.prod(math.comb(g.stop - g.start, int(z[g].sum())) for g in layout.index_ranges)
    _check_budget(n_assign, budget, "exact permutation test")
    tol = TIE_TOL * max(1.0, float(np.sum(np.abs(r))))
    values = np.array([0.0])
    counts = np.array([1], dtype=np.int64)
    for g in layout.index_ranges:
        rk = r[g]
        t = int(z[g].sum())
        sums = np.array([math.fsum(c) for c in itertools.combinations(rk.tolist(), t)])
        sv, sc = dedupe_atoms(sums, np.ones(sums.size, dtype=np.int64), tol * 1e-3)
        values, counts = dedupe_atoms(np.add.outer(values, sv).ravel(),
                                      np.multiply.outer(counts, sc).ravel(), tol * 1e-3)
    return values, counts, n_assign, tol


def permutation_test(z, r, layout: StratumLayout, alternative: str = "two_sided", method: str = "exact",
                     reps: int = DEFAULT_REPS, rng=None, budget: int = DEFAULT_BUDGET,
                     workers: int | None = None) -> TestResult:
    """Stratified permutation test of Fisher's sharp null with statistic ``Z^T R``.

    Parameters
    ----------
    z : array_like
        Binary treatment indicators, fixing the treated count of every stratum.
    r : array_like
        Fixed scores.
    alternative : {'greater', 'less', 'two_sided'}
        Two-sided p-values double the smaller one-sided p-value, capped at 1.
    method : {'exact', 'monte_carlo', 'normal_approx'}
        ``exact`` enumerates distinct within-stratum assignments;
        ``monte_carlo`` uses ``(1 + #{T >= t_obs}) / (1 + reps)``;
        ``normal_approx`` standardizes with the exact permutation moments.

    Warns
    -----
    DegenerateScores
        When the reference law is a point mass; the p-value is then 1.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    z, r = _check_inputs(z, r, layout)
    observed = math.fsum(z * r)
    var = _reference_variance(z, r, layout)
    n_reps = reps if method == "monte_carlo" else 0
    if var <= 0:
        warnings.warn("reference distribution is a point mass; p-value set to 1", DegenerateScores, stacklevel=2)
        return TestResult(observed, 1.0, method, n_reps, None, alternative, 1.0, 1.0, degenerate=True)
    try:
        report = rate_product(z, r, layout)
    except DegenerateVariance:  # pragma: no cover - guarded by var > 0
        report = None

    if method == "exact":
        values, counts, total, tol = _exact_law(z, r, layout, budget)
        ge = int(counts[values >= observed - tol].sum())
        le = int(counts[values <= observed + tol].sum())
        pg, pl = ge / total, le / total
        num = {"greater": ge, "less": le}.get(alternative)
        return TestResult(observed, _combine(pg, pl, alternative), method, 0, report, alternative, pg, pl,
                          p_numerator=num, p_denominator=total)

    if method == "monte_carlo":
        if reps < 1:
            raise ValueError("reps must be positive")
        ref = _mc_reference(z, r, layout, reps, as_source(rng), workers)
        tol = TIE_TOL * max(1.0, float(np.sum(np.abs(r))))
        pg = (1 + int(np.count_nonzero(ref >= observed - tol))) / (1 + reps)
        pl = (1 + int(np.count_nonzero(ref <= observed + tol))) / (1 + reps)
        return TestResult(observed, _combine(pg, pl, alternative), method, reps, report, alternative, pg, pl)

    mean = _reference_mean(z, r, layout)
    t = (observed - mean) / math.sqrt(var)
    pg, pl = float(ndtr(-t)), float(ndtr(t))
    return TestResult(observed, _combine(pg, pl, alternative), method, 0, report, alternative, pg, pl,
                      extra={"z_score": t})


def _mc_reference(z, r, layout, reps, source: RandomSource, workers):
    starts, sizes = kernels.layout_arrays(layout)

    def chunk_fn(size, stream):
        return kernels.product_statistic(r, z, starts, sizes, draw_swaps(layout, size, stream))

    return run_chunked(chunk_fn, reps, source, workers)


def iv_test(y, d, z, layout: StratumLayout, beta0: float = 0.0, alternative: str = "two_sided",
            method: str = "exact", reps: int = DEFAULT_REPS, rng=None, budget: int = DEFAULT_BUDGET,
            workers: int | None = None) -> TestResult:
    """Test ``H0: Y_i(d) = Y_i(0) + beta0 * d`` using adjusted scores ``y - beta0 * d``."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    if y.shape != d.shape:
        raise InvariantViolation("y and d have equal length")
    return permutation_test(z, y - beta0 * d, layout, alternative, method, reps, rng, budget, workers)


@dataclass
class ConfidenceSet:
    """Accepted grid points from test inversion and their enclosing interval."""

    lower: float | None
    upper: float | None
    accepted: list
    p_values: list
    grid: list
    alpha: float
    nonconvex: bool
    empty: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def iv_confidence_interval(y, d, z, layout: StratumLayout, alpha: float = 0.05, beta_grid=None,
                           method: str = "monte_carlo", reps: int = DEFAULT_REPS, rng=None,
                           budget: int = DEFAULT_BUDGET, workers: int | None = None) -> ConfidenceSet:
    """Invert two-sided IV tests over ``beta_grid``.

    Monte Carlo tests share one set of permutation draws across the grid, so
    ``Z_pi^T (y - beta d)`` is linear in ``beta`` and the curve is computed
    from two reference vectors.

    Warns
    -----
    EmptyInterval
        When no grid point is accepted; the result then has ``empty=True``.
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    grid = np.asarray(beta_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) < 0):
        raise ValueError("beta_grid must be a nonempty sorted vector")
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    zz, _ = _check_inputs(z, y, layout)
    pvals = []
    if method == "monte_carlo":
        source = as_source(rng)
        ref_y = _mc_reference(zz, y, layout, reps, source.copy(), workers)
        ref_d = _mc_reference(zz, d, layout, reps, source, workers)
        obs_y, obs_d = math.fsum(zz * y), math.fsum(zz * d)
        for b in grid:
            r = y - b * d
            if _reference_variance(zz, r, layout) <= 0:
                pvals.append(1.0)
                continue
            ref = ref_y - b * ref_d
            obs = obs_y - b * obs_d
            tol = TIE_TOL * max(1.0, float(np.sum(np.abs(r))))
            pg = (1 + int(np.count_nonzero(ref >= obs - tol))) / (1 + reps)
            pl = (1 + int(np.count_nonzero(ref <= obs + tol))) / (1 + reps)
            pvals.append(_combine(pg, pl, "two_sided"))
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateScores)
            for b in grid:
                pvals.append(iv_test(y, d, zz, layout, b, "two_sided", method, reps, rng, budget, workers).p_value)
    accepted_mask = np.asarray(pvals) > alpha
    idx = np.flatnonzero(accepted_mask)
    accepted = grid[idx].tolist()
    empty = idx.size == 0
    if empty:
        warnings.warn("no grid point accepted", EmptyInterval, stacklevel=2)
    nonconvex = bool(idx.size > 0 and idx[-1] - idx[0] + 1 != idx.size)
    return ConfidenceSet(
        lower=None if empty else float(grid[idx[0]]),
        upper=None if empty else float(grid[idx[-1]]),
        accepted=accepted,
        p_values=[float(p) for p in pvals],
        grid=grid.tolist(),
        alpha=float(alpha),
        nonconvex=nonconvex,
        empty=bool(empty),
    )
