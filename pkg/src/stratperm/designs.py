"""Stratified and post-stratified sampling and experiments as permutation statistics.

A stratified simple random sample (or completely randomized experiment within
strata) is compiled into a matrix whose permutation statistic has the same law
as the plug-in estimator: a unit is sampled (treated) when its stratum-local
image falls among the first ``n_[k]1`` columns.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr

from .bounds import BoundReport, rate
from .core import StratifiedMatrix, StratumLayout
from .errors import (CountMismatch, DegenerateVariance, EventUnreachable, InvariantViolation)
from .oracle import DEFAULT_BUDGET, ExactDistribution, _check_budget, dedupe_atoms
from .montecarlo import default_workers
from .rng import as_source

__all__ = [
    "SamplingDesign",
    "ExperimentDesign",
    "PostStratSpec",
    "PostStratReport",
    "build_design_matrix",
    "design_variance",
    "estimate",
    "rate_design",
    "event_probability",
    "simulate_post_stratified",
    "enumerate_post_stratified",
    "mixture_discrepancy",
]

POSTSTRAT_CHUNK = 4096
POSTSTRAT_ROUND = 8
DEFAULT_MAX_DRAWS = 10**6
GRID_POINTS = 2001
GRID_HALF_WIDTH = 8.0


def _vector(x, n, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise InvariantViolation(f"{name} has length n", f"{name} must have length {n}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvariantViolation(f"{name} is finite")
    return v


def _weights(weights, layout):
    if weights is None:
        return tuple(s / layout.n for s in layout.sizes)
    w = tuple(float(x) for x in weights)
    if len(w) != layout.K or any(not x > 0 for x in w):
        raise InvariantViolation("weights are K positive numbers")
    return w


def _stratum_var(y):
    return float(np.var(y, ddof=1)) if y.size > 1 else 0.0


@dataclass(frozen=True, eq=False)
class SamplingDesign:
    """Stratified simple random sampling without replacement.

    Parameters
    ----------
    layout : StratumLayout
    outcomes : array_like
        ``Y_i`` for every unit, ordered by stratum.
    sample_sizes : sequence of int
        ``n_[k]1`` with ``1 <= n_[k]1 <= n_[k]``.
    weights : sequence of float, optional
        Positive stratum weights; defaults to ``n_[k] / n``.
    """

    layout: StratumLayout
    outcomes: np.ndarray
    sample_sizes: tuple[int, ...]
    weights: tuple[float, ...] | None = None
    kind: str = field(default="sampling", init=False)

    def __post_init__(self):
        object.__setattr__(self, "outcomes", _vector(self.outcomes, self.layout.n, "outcomes"))
        sizes = tuple(int(s) for s in self.sample_sizes)
        if len(sizes) != self.layout.K:
            raise InvariantViolation("one sample size per stratum")
        for k, (m, nk) in enumerate(zip(sizes, self.layout.sizes)):
            if not 1 <= m <= nk:
                raise InvariantViolation("1 <= n_[k]1 <= n_[k]", f"stratum {k}: sample size {m} outside [1, {nk}]")
        object.__setattr__(self, "sample_sizes", sizes)
        object.__setattr__(self, "weights", _weights(self.weights, self.layout))

    def strata(self):
        return [self.outcomes[r] for r in self.layout.index_ranges]

    @property
    def target(self) -> float:
        """``gamma = sum_k w_[k] Ybar_[k]``."""
        return math.fsum(w * float(y.mean()) for w, y in zip(self.weights, self.strata()))


@dataclass(frozen=True, eq=False)
class ExperimentDesign:
    """Stratified completely randomized experiment.

    ``treated_counts`` holds ``n_[k]1`` with both arms nonempty in every stratum.
    """

    layout: StratumLayout
    y1: np.ndarray
    y0: np.ndarray
    treated_counts: tuple[int, ...]
    weights: tuple[float, ...] | None = None
    kind: str = field(default="experiment", init=False)

    def __post_init__(self):
        object.__setattr__(self, "y1", _vector(self.y1, self.layout.n, "y1"))
        object.__setattr__(self, "y0", _vector(self.y0, self.layout.n, "y0"))
        counts = tuple(int(s) for s in self.treated_counts)
        if len(counts) != self.layout.K:
            raise InvariantViolation("one treated count per stratum")
        for k, (m, nk) in enumerate(zip(counts, self.layout.sizes)):
            if not 1 <= m <= nk - 1:
                raise InvariantViolation(
                    "both arms nonempty", f"stratum {k}: treated count {m} outside [1, {nk - 1}]"
                )
        object.__setattr__(self, "treated_counts", counts)
        object.__setattr__(self, "weights", _weights(self.weights, self.layout))

    @property
    def sample_sizes(self):
        return self.treated_counts

    def strata(self):
        return [(self.y1[r], self.y0[r]) for r in self.layout.index_ranges]

    @property
    def target(self) -> float:
        """``tau = sum_k w_[k] (Ybar_[k](1) - Ybar_[k](0))``."""
        return math.fsum(w * float(a.mean() - b.mean()) for w, (a, b) in zip(self.weights, self.strata()))


def build_design_matrix(d) -> StratifiedMatrix:
    blocks = []
    if isinstance(d, SamplingDesign):
        for y, m, w, nk in zip(d.strata(), d.sample_sizes, d.weights, d.layout.sizes):
            b = np.zeros((nk, nk))
            b[:, :m] = (w / m) * y[:, None]
            blocks.append(b)
    elif isinstance(d, ExperimentDesign):
        for (y1, y0), m, w, nk in zip(d.strata(), d.treated_counts, d.weights, d.layout.sizes):
            b = np.empty((nk, nk))
            b[:, :m] = (w / m) * y1[:, None]
            b[:, m:] = -(w / (nk - m)) * y0[:, None]
            blocks.append(b)
    else:
        raise TypeError(f"expected a SamplingDesign or ExperimentDesign, got {type(d).__name__}")
    return StratifiedMatrix(d.layout, tuple(blocks))


def design_variance(d) -> float:
    """Exact variance of the plug-in estimator under the design.

    For general weights the sampling variance is
    ``sum_k w_[k]^2 n_[k]0 S^2_[k] / (n_[k]1 n_[k])`` and the experiment variance
    ``sum_k w_[k]^2 (S^2_[k]1/n_[k]1 + S^2_[k]0/n_[k]0 - S^2_[k]tau/n_[k])``.
    """
    terms = []
    if isinstance(d, SamplingDesign):
        for y, m, w, nk in zip(d.strata(), d.sample_sizes, d.weights, d.layout.sizes):
            terms.append(w * w * (nk - m) * _stratum_var(y) / (m * nk))
    else:
        for (y1, y0), m, w, nk in zip(d.strata(), d.treated_counts, d.weights, d.layout.sizes):
            terms.append(w * w * (_stratum_var(y1) / m + _stratum_var(y0) / (nk - m)
                                  - _stratum_var(y1 - y0) / nk))
    return math.fsum(terms)


def estimate(d, realization) -> float:
    """Plug-in estimator for a 0/1 sampling (or treatment) indicator vector.

    Raises
    ------
    CountMismatch
        If some stratum's indicator count differs from the design's ``n_[k]1``.
    """
    z = np.asarray(realization)
    if z.shape != (d.layout.n,) or not np.all((z == 0) | (z == 1)):
        raise CountMismatch("realization must be a 0/1 vector of length n")
    z = z.astype(bool)
    total = []
    for k, (r, m, w) in enumerate(zip(d.layout.index_ranges, d.sample_sizes, d.weights)):
        zk = z[r]
        if int(zk.sum()) != m:
            raise CountMismatch(f"stratum {k}: {int(zk.sum())} indicated units, design has {m}")
        if isinstance(d, SamplingDesign):
            total.append(w * float(d.outcomes[r][zk].mean()))
        else:
            total.append(w * float(d.y1[r][zk].mean() - d.y0[r][~zk].mean()))
    return math.fsum(total)


def rate_design(d, constant_override: float = 1.0) -> BoundReport:
    """Rate quantity of the design-level bound, from finite-population moments.

    Sampling: ``sigma^-3 sum_k w^3 M^3_[k](Y) / n_[k]1^2``; experiment:
    ``sigma^-3 sum_k w^3 (M^3_[k](Y(1))/n_[k]1^2 + M^3_[k](Y(0))/n_[k]0^2)``.
    The exponent and regime come from the compiled matrix.
    """
    var = design_variance(d)
    if var <= 0:
        raise DegenerateVariance("the design estimator has zero variance")
    terms = []
    if isinstance(d, SamplingDesign):
        for y, m, w in zip(d.strata(), d.sample_sizes, d.weights):
            terms.append(w ** 3 * float(np.mean(np.abs(y - y.mean()) ** 3)) / m ** 2)
        method = "design_sampling"
    else:
        for (y1, y0), m, w, nk in zip(d.strata(), d.treated_counts, d.weights, d.layout.sizes):
            terms.append(w ** 3 * (float(np.mean(np.abs(y1 - y1.mean()) ** 3)) / m ** 2
                                   + float(np.mean(np.abs(y0 - y0.mean()) ** 3)) / (nk - m) ** 2))
        method = "design_experiment"
    q = math.fsum(terms) / var ** 1.5
    base = rate(build_design_matrix(d), "columnwise", constant_override)
    return dataclasses.replace(
        base, method=method, rate_quantity=q,
        convenience_bound=base.constant_override * q ** base.exponent_delta,
    )


# ---------------------------------------------------------------- post-stratification

@dataclass(frozen=True)
class PostStratSpec:
    """Global SRS (or complete randomization) post-stratified by a K-level covariate.

    ``labels`` are 0-based stratum labels per unit and must cover ``0..K-1``.
    ``event`` is ``"D1"`` (every stratum sampled) for sampling and ``"D"``
    (both arms nonempty in every stratum) for experiments.
    """

    labels: tuple[int, ...]
    n1: int
    kind: str = "sampling"
    event: str | None = None

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        if not labels:
            raise InvariantViolation("at least one unit")
        K = max(labels) + 1
        if min(labels) < 0 or set(labels) != set(range(K)):
            raise InvariantViolation("labels cover all K levels")
        if self.kind not in ("sampling", "experiment"):
            raise ValueError("kind must be 'sampling' or 'experiment'")
        event = self.event or ("D1" if self.kind == "sampling" else "D")
        if (self.kind, event) not in (("sampling", "D1"), ("experiment", "D")):
            raise ValueError(f"event {event!r} does not match kind {self.kind!r}")
        if not 1 <= int(self.n1) <= len(labels):
            raise InvariantViolation("1 <= n1 <= n")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "event", event)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(np.bincount(self.labels).tolist())

    @property
    def order(self) -> np.ndarray:
        """Unit indices sorted by stratum (stable)."""
        return np.argsort(np.asarray(self.labels), kind="stable")

    def admissible(self, u) -> np.ndarray:
        u = np.asarray(u)
        sizes = np.asarray(self.sizes)
        if self.event == "D1":
            return np.all(u >= 1, axis=-1)
        return np.all((u >= 1) & (u <= sizes - 1), axis=-1)


def _population(spec: PostStratSpec, population):
    """Return outcomes reordered by stratum: ``y`` or ``(y1, y0)``."""
    order = spec.order
    if spec.kind == "sampling":
        return _vector(population, spec.n, "population")[order]
    y1, y0 = population
    return _vector(y1, spec.n, "y1")[order], _vector(y0, spec.n, "y0")[order]


def _conditional_design(spec, pop, u):
    layout = StratumLayout(spec.sizes)
    if spec.kind == "sampling":
        return SamplingDesign(layout, pop, tuple(int(x) for x in u))
    return ExperimentDesign(layout, pop[0], pop[1], tuple(int(x) for x in u))


def event_probability(spec: PostStratSpec) -> float:
    """Exact probability of the conditioning event under the global design."""
    poly = [1]
    for nk in spec.sizes:
        lo, hi = (1, nk) if spec.event == "D1" else (1, nk - 1)
        factor = [math.comb(nk, u) if lo <= u <= hi else 0 for u in range(nk + 1)]
        new = [0] * (len(poly) + nk)
        for a, ca in enumerate(poly):
            if ca:
                for b, cb in enumerate(factor):
                    new[a + b] += ca * cb
        poly = new
    hits = poly[spec.n1] if spec.n1 < len(poly) else 0
    return hits / math.comb(spec.n, spec.n1)


def mixture_discrepancy(scales, weights=None) -> float:
    """``sup_t |avg_j Phi(t / s_j) - Phi(t)|`` for relative scales ``s_j = sigma(U_j) / sigma``.

    Evaluated on 2001 grid points over [-8, 8], then refined by a bounded
    scalar search around the grid maximizer.
    """
    s = np.asarray(scales, dtype=float)
    wts = np.full(s.size, 1.0 / s.size) if weights is None else np.asarray(weights, dtype=float)

    def gap(t):
        return abs(float(np.dot(wts, ndtr(t / s))) - float(ndtr(t)))

    grid = np.linspace(-GRID_HALF_WIDTH, GRID_HALF_WIDTH, GRID_POINTS)
    vals = np.abs(ndtr(grid[:, None] / s[None, :]) @ wts - ndtr(grid))
    i = int(np.argmax(vals))
    best = float(vals[i])
    step = grid[1] - grid[0]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -gap(t), bounds=(lo, hi), method="bounded",
                              options={"xatol": step * 1e-6})
        best = max(best, -float(res.fun))
    return best


def _cond_variances(spec, pop, U):
    """``sigma^2(U)`` for every row of ``U`` (vectorized design_variance)."""
    sizes = np.asarray(spec.sizes, dtype=float)
    w = sizes / spec.n
    bounds = np.concatenate([[0], np.cumsum(spec.sizes)])
    if spec.kind == "sampling":
        s2 = np.array([_stratum_var(pop[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])
        return np.sum(w ** 2 * (sizes - U) * s2 / (U * sizes), axis=1)
    y1, y0 = pop
    s1 = np.array([_stratum_var(y1[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])
    s0 = np.array([_stratum_var(y0[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])
    st = np.array([_stratum_var(y1[a:b] - y0[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])
    return np.sum(w ** 2 * (s1 / U + s0 / (sizes - U) - st / sizes), axis=1)


@dataclass
class PostStratReport:
    kind: str
    event: str
    accepted: int
    global_draws: int
    acceptance_rate: float
    event_probability: float
    sigma2_ps: float
    estimate_mean: float
    estimate_variance: float
    target: float
    plugins: dict
    first_term_quantity: float
    mixture_discrepancy: float
    p_condition_holds: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _draw_chunk(spec, pop, size, stream):
    n, n1 = spec.n, spec.n1
    keys = stream.uniform((size, n))
    chosen = np.argsort(keys, axis=1, kind="stable")[:, :n1]
    ind = np.zeros((size, n), dtype=bool)
    np.put_along_axis(ind, chosen, True, axis=1)
    bounds = np.concatenate([[0], np.cumsum(spec.sizes)])
    U = np.add.reduceat(ind, bounds[:-1], axis=1)
    ok = spec.admissible(U)
    ind, U = ind[ok], U[ok]
    pos = np.flatnonzero(ok)
    if not ok.any():
        return U, np.empty(0), pos, size
    sizes = np.asarray(spec.sizes, dtype=float)
    w = sizes / n
    if spec.kind == "sampling":
        sums = np.add.reduceat(ind * pop, bounds[:-1], axis=1)
        est = np.sum(w * sums / U, axis=1)
    else:
        y1, y0 = pop
        t = np.add.reduceat(ind * y1, bounds[:-1], axis=1)
        c = np.add.reduceat(~ind * y0, bounds[:-1], axis=1)
        est = np.sum(w * (t / U - c / (sizes - U)), axis=1)
    return U, est, pos, size


def _p_condition(spec, pop) -> bool:
    p = spec.n1 / spec.n
    bounds = np.concatenate([[0], np.cumsum(spec.sizes)])
    rng_ = list(zip(bounds[:-1], bounds[1:]))
    w = np.asarray(spec.sizes) / spec.n
    if spec.kind == "sampling":
        s = np.sqrt([_stratum_var(pop[a:b]) for a, b in rng_])
        return bool(s.max() > 0 and 0 < p < s.min() / s.max())
    y1, y0 = pop
    s1 = np.sqrt([_stratum_var(y1[a:b]) for a, b in rng_])
    s0 = np.sqrt([_stratum_var(y0[a:b]) for a, b in rng_])
    st2 = np.array([_stratum_var(y1[a:b] - y0[a:b]) for a, b in rng_])
    if s1.max() <= 0 or s0.max() <= 0:
        return False
    lhs = (s1.min() / s1.max()) * float(w @ s1 ** 2) / p + (s0.min() / s0.max()) * float(w @ s0 ** 2) / (1 - p)
    return bool(lhs > float(w @ st2))


def simulate_post_stratified(spec: PostStratSpec, population, reps: int, rng=None,
                             workers: int | None = None, max_draws: int = DEFAULT_MAX_DRAWS) -> PostStratReport:
    """Rejection-sample the global design until ``reps`` draws satisfy the event.

    Population outcomes are given in unit order (``y`` for sampling, ``(y1, y0)``
    for experiments) and reordered internally by stratum. Stratum weights are
    ``n_[k] / n``.

    Raises
    ------
    EventUnreachable
        If no draw satisfies the event within ``max_draws`` global draws.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    pop = _population(spec, population)
    prob = event_probability(spec)
    if prob == 0.0:
        raise EventUnreachable(f"event {spec.event} has probability zero for this population")
    source = as_source(rng)
    Us, ests = [], []
    accepted = drawn = 0

    n_workers = default_workers() if workers is None else max(1, int(workers))
    while accepted < reps and drawn < max_draws:
        streams = source.spawn(POSTSTRAT_ROUND)
        sizes = []
        for _ in streams:
            size = min(POSTSTRAT_CHUNK, max_draws - drawn - sum(sizes))
            sizes.append(max(size, 0))
        jobs = [(s, st) for s, st in zip(sizes, streams) if s > 0]
        if n_workers > 1:
            with ThreadPoolExecutor(max_workers=n_workers) as ex:
                parts = list(ex.map(lambda a: _draw_chunk(spec, pop, *a), jobs))
        else:
            parts = [_draw_chunk(spec, pop, *a) for a in jobs]
        for U, est, pos, size in parts:
            if accepted >= reps:
                break
            take = min(reps - accepted, est.size)
            if take < est.size:
                # count global draws only up to the last accepted one
                size = int(pos[take - 1]) + 1
            Us.append(U[:take])
            ests.append(est[:take])
            accepted += take
            drawn += size
    if accepted == 0:
        raise EventUnreachable(f"no draw satisfied {spec.event} within {max_draws} global draws")
    U = np.concatenate(Us).astype(float)
    est = np.concatenate(ests)
    var_u = _cond_variances(spec, pop, U)
    sigma2 = float(np.mean(var_u))
    sizes = np.asarray(spec.sizes, dtype=float)
    w = sizes / spec.n
    bounds = np.concatenate([[0], np.cumsum(spec.sizes)])
    rng_ = list(zip(bounds[:-1], bounds[1:]))
    if spec.kind == "sampling":
        m3 = np.array([np.mean(np.abs(pop[a:b] - pop[a:b].mean()) ** 3) for a, b in rng_])
        per = np.mean(U ** -2 * (var_u ** -1.5)[:, None], axis=0)
        plugins = {"E[n1^-2 sigma_ps^-3(U)]": per.tolist()}
        first = float(np.sum(w ** 3 * per * m3))
        target = float(np.mean(pop))
    else:
        y1, y0 = pop
        m31 = np.array([np.mean(np.abs(y1[a:b] - y1[a:b].mean()) ** 3) for a, b in rng_])
        m30 = np.array([np.mean(np.abs(y0[a:b] - y0[a:b].mean()) ** 3) for a, b in rng_])
        e1 = np.mean(U ** -2, axis=0)
        e0 = np.mean((sizes - U) ** -2, axis=0)
        plugins = {"E[n1^-2]": e1.tolist(), "E[n0^-2]": e0.tolist()}
        first = float(np.sum(w ** 3 * (e1 * m31 + e0 * m30))) / sigma2 ** 1.5
        target = float(np.mean(y1 - y0))
    scales = np.sqrt(var_u / sigma2) if sigma2 > 0 else np.ones_like(var_u)
    disc = mixture_discrepancy(scales) if sigma2 > 0 else 0.0
    return PostStratReport(
        kind=spec.kind,
        event=spec.event,
        accepted=accepted,
        global_draws=drawn,
        acceptance_rate=accepted / drawn,
        event_probability=prob,
        sigma2_ps=sigma2,
        estimate_mean=float(np.mean(est)),
        estimate_variance=float(np.var(est, ddof=1)) if est.size > 1 else 0.0,
        target=target,
        plugins=plugins,
        first_term_quantity=first,
        mixture_discrepancy=disc,
        p_condition_holds=_p_condition(spec, pop),
    )


def enumerate_post_stratified(spec: PostStratSpec, population, budget: int = DEFAULT_BUDGET):
    """Exact conditional laws of the post-stratified estimator given ``U``.

    Enumerates every global sample (or assignment) of size ``n1``; returns a
    dict mapping each admissible ``U`` to ``(probability of U, ExactDistribution)``.
    """
    _check_budget(math.comb(spec.n, spec.n1), budget, "enumerate_post_stratified")
    pop = _population(spec, population)
    bounds = np.concatenate([[0], np.cumsum(spec.sizes)])
    combos = np.array(list(itertools.combinations(range(spec.n), spec.n1)), dtype=np.int64)
    ind = np.zeros((combos.shape[0], spec.n), dtype=bool)
    np.put_along_axis(ind, combos, True, axis=1)
    U = np.add.reduceat(ind, bounds[:-1], axis=1)
    ok = spec.admissible(U)
    total = combos.shape[0]
    out = {}
    for key in sorted({tuple(u) for u in U[ok].tolist()}):
        rows = np.flatnonzero(np.all(U == np.asarray(key), axis=1))
        d = _conditional_design(spec, pop, key)
        vals = np.array([estimate(d, ind[r].astype(np.int8)) for r in rows])
        scale = math.sqrt(design_variance(d)) or 1.0
        v, c = dedupe_atoms(vals, np.ones(vals.size, dtype=np.int64), 1e-12 * scale)
        out[key] = (rows.size / total, ExactDistribution.from_counts(v, c))
    return out
