"""Brute-force enumeration over stratified permutations.

Everything here is exact up to floating-point rounding and is meant for
instances small enough to enumerate. Each routine refuses to run past its
budget rather than silently sampling.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .core import StratifiedMatrix, StratumLayout, moments, transform
from .distances import kolmogorov_to_normal, wasserstein_to_normal
from .errors import BudgetExceeded, DegenerateLayout, DegenerateVariance
from .sampling import pi_dagger, zero_bias_masses

__all__ = [
    "ExactDistribution",
    "VerificationReport",
    "DEFAULT_BUDGET",
    "dedupe_atoms",
    "enumerate_distribution",
    "enumerate_permutations",
    "exact_distance",
    "verify_stein_pair",
    "verify_zero_bias",
    "verify_pi_dagger",
]

DEFAULT_BUDGET = 10**7
ATOM_TOL = 1e-12


def dedupe_atoms(values, weights, tol):
    """Sort atoms and merge neighbours closer than ``tol``; returns (values, weights)."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights)
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    if v.size == 0:
        return v, w
    new_group = np.empty(v.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(v) > tol
    idx = np.cumsum(new_group) - 1
    wsum = np.zeros(idx[-1] + 1, dtype=w.dtype)
    np.add.at(wsum, idx, w)
    # representative value: weighted mean of the merged atoms
    vsum = np.zeros(idx[-1] + 1)
    np.add.at(vsum, idx, v * w)
    vals = np.where(wsum > 0, vsum / np.where(wsum > 0, wsum, 1), v[new_group])
    return vals, wsum


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """Finite law given by sorted distinct atoms and their probabilities."""

    values: np.ndarray
    probs: np.ndarray
    counts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("values and probs must be matching non-empty vectors")
        if np.any(np.diff(v) <= 0):
            raise ValueError("atoms must be sorted and distinct")
        if np.any(p <= 0) or abs(math.fsum(p) - 1.0) > 1e-14 * max(1, v.size) ** 0.5 + 1e-14:
            raise ValueError("probabilities must be positive and sum to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_counts(cls, values, counts) -> "ExactDistribution":
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        return cls(np.asarray(values, dtype=float), counts / total, counts)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    def mean(self) -> float:
        return math.fsum(self.values * self.probs)

    def variance(self) -> float:
        mu = self.mean()
        return math.fsum((self.values - mu) ** 2 * self.probs)

    def expect(self, fn) -> float:
        return math.fsum(fn(self.values) * self.probs)

    def cdf_arrays(self):
        """``F(x_i)``, ``F(x_i-)`` and ``1 - F(x_i)`` at every atom."""
        if self.counts is not None:
            total = int(self.counts.sum())
            c = np.cumsum(self.counts)
            right = c / total
            left = (c - self.counts) / total
            sf = (total - c) / total
        else:
            right = np.cumsum(self.probs)
            left = right - self.probs
            sf = np.cumsum(self.probs[::-1])[::-1] - self.probs
        return right, left, sf

    def standardized(self) -> "ExactDistribution":
        mu, sd = self.mean(), math.sqrt(self.variance())
        if sd <= 0:
            raise DegenerateVariance("point mass cannot be standardized")
        return ExactDistribution((self.values - mu) / sd, self.probs, self.counts)

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "probs": self.probs.tolist()}


def _composite_count(layout: StratumLayout) -> int:
    return math.prod(math.factorial(s) for s in layout.sizes)


def _check_budget(used: int, budget: int, what: str):
    if used > budget:
        raise BudgetExceeded(f"{what} needs {used} enumeration steps; budget is {budget}")


def enumerate_distribution(A: StratifiedMatrix, budget: int = DEFAULT_BUDGET) -> ExactDistribution:
    """Exact law of ``W_{A,pi}`` under ``pi ~ Uniform(Pi_K)``.

    Strata are independent, so the law is the convolution of the per-stratum
    laws; atoms are merged when closer than ``1e-12`` on the standardized scale.
    """
    _check_budget(_composite_count(A.layout), budget, "enumerate_distribution")
    mr = moments(A)
    scale = math.sqrt(mr.variance) if mr.variance > 0 else max(1.0, abs(mr.mean))
    tol = ATOM_TOL * scale
    values = np.array([0.0])
    counts = np.array([1], dtype=np.int64)
    for b in A.blocks:
        sv, sc = dedupe_atoms(kernels.perm_sums(b), np.ones(math.factorial(b.shape[0]), dtype=np.int64), tol)
        values = np.add.outer(values, sv).ravel()
        counts = np.multiply.outer(counts, sc).ravel()
        values, counts = dedupe_atoms(values, counts, tol)
    return ExactDistribution.from_counts(values, counts)


def enumerate_permutations(layout: StratumLayout, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """All composite stratified permutations as an ``(N, n)`` array of global images."""
    n_total = _composite_count(layout)
    _check_budget(n_total, budget, "enumerate_permutations")
    per = []
    for start, s in zip(layout.starts, layout.sizes):
        per.append(np.array(list(itertools.permutations(range(start, start + s))), dtype=np.int64))
    grids = np.meshgrid(*[np.arange(len(p)) for p in per], indexing="ij")
    return np.concatenate([p[g.ravel()] for p, g in zip(per, grids)], axis=1)


def exact_distance(d: ExactDistribution, kind: str) -> float:
    """Kolmogorov or Wasserstein distance from ``d`` to N(0, 1); ``d`` is not standardized here."""
    right, left, sf = d.cdf_arrays()
    if kind == "kolmogorov":
        return kolmogorov_to_normal(d.values, right, left)
    if kind == "wasserstein":
        return wasserstein_to_normal(d.values, right, sf)
    raise ValueError(f"unknown distance kind {kind!r}")


@dataclass
class VerificationReport:
    identity: str
    max_violation: float
    budget_used: int
    passed: bool
    tolerance: float
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


def _stat_all(A: StratifiedMatrix, perms: np.ndarray) -> np.ndarray:
    dense_rows = []
    for r, b in zip(A.layout.index_ranges, A.blocks):
        local = perms[:, r.start:r.stop] - r.start
        dense_rows.append(b[np.arange(b.shape[0])[None, :], local].sum(axis=1))
    return np.sum(dense_rows, axis=0)


def verify_stein_pair(A: StratifiedMatrix, budget: int = DEFAULT_BUDGET, tol: float = 1e-10) -> VerificationReport:
    """Check the random-transposition Stein pair by full enumeration.

    Checks, on the centered matrix: ``E(W''|pi) = (1 - 2/(n-K)) W(pi)`` for
    every ``pi``; ``var(W - W'') = 4 sigma^2 / (n - K)``; and symmetry of the
    joint law of ``(W, W'')`` (compared with integer weights, so exact).
    """
    layout = A.layout
    n, K = layout.n, layout.K
    if n == K:
        raise DegenerateLayout("no within-stratum transposition exists")
    n_pairs = sum(s * (s - 1) for s in layout.sizes)
    used = _composite_count(layout) * n_pairs
    _check_budget(used, budget, "verify_stein_pair")
    mr = moments(A)
    a0 = transform(A, "center")
    perms = enumerate_permutations(layout, budget)
    w = _stat_all(a0, perms)
    lam = 2.0 / (n - K)
    L = math.lcm(*[s for s in layout.sizes if s > 1])

    cond_mean_delta = np.zeros_like(w)
    sq_terms = []
    diff_terms = []
    pair_w, pair_w2, pair_wt = [], [], []
    for r, b, s in zip(layout.index_ranges, a0.blocks, layout.sizes):
        if s < 2:
            continue
        p_b = (s - 1) / (n - K)
        local = perms[:, r.start:r.stop] - r.start
        for i in range(s):
            for j in range(s):
                if i == j:
                    continue
                pi_i, pi_j = local[:, i], local[:, j]
                delta = b[i, pi_j] + b[j, pi_i] - b[i, pi_i] - b[j, pi_j]
                weight = p_b / (s * (s - 1))
                cond_mean_delta += weight * delta
                sq_terms.append(weight * np.mean(delta * delta))
                diff_terms.append(weight * np.mean(delta))
                pair_w.append(w)
                pair_w2.append(w + delta)
                pair_wt.append(np.full(w.size, L // s, dtype=np.int64))
    linearity = float(np.max(np.abs(w + cond_mean_delta - (1.0 - lam) * w)))
    var_diff = math.fsum(sq_terms) - math.fsum(diff_terms) ** 2
    expected_var = 4.0 * mr.variance / (n - K)
    var_violation = abs(var_diff - expected_var)

    # exchangeability: integer-weighted joint law of (W, W'') vs its transpose
    ww = np.concatenate(pair_w)
    ww2 = np.concatenate(pair_w2)
    wt = np.concatenate(pair_wt)
    scale = math.sqrt(mr.variance) if mr.variance > 0 else 1.0
    atoms, _ = dedupe_atoms(np.concatenate([ww, ww2]), np.ones(2 * ww.size), ATOM_TOL * scale)
    exch = _exchangeability_gap(atoms, ww, ww2, wt, ATOM_TOL * scale)
    total_weight = float(wt.sum())
    checks = {
        "linearity": linearity,
        "variance_of_difference": var_violation,
        "exchangeability": exch / total_weight,
    }
    worst = max(checks.values())
    return VerificationReport("stein_pair", worst, used, worst <= tol, tol, checks)


def _atom_index(atoms, x, tol):
    idx = np.searchsorted(atoms, x)
    idx = np.clip(idx, 0, atoms.size - 1)
    left = np.clip(idx - 1, 0, atoms.size - 1)
    use_left = np.abs(atoms[left] - x) < np.abs(atoms[idx] - x)
    return np.where(use_left, left, idx)


def _exchangeability_gap(atoms, w, w2, weights, tol) -> float:
    u = atoms.size
    ia = _atom_index(atoms, w, tol)
    ib = _atom_index(atoms, w2, tol)
    keys = ia * u + ib
    uk, inv = np.unique(keys, return_inverse=True)
    mass = np.zeros(uk.size, dtype=np.int64)
    np.add.at(mass, inv, weights)
    swapped = (uk % u) * u + uk // u
    pos = np.searchsorted(uk, swapped)
    pos_c = np.clip(pos, 0, uk.size - 1)
    found = uk[pos_c] == swapped
    mirror = np.where(found, mass[pos_c], 0)
    return float(np.max(np.abs(mass - mirror))) if uk.size else 0.0


def _local_perms(s: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(s))), dtype=np.int64).reshape(-1, s)


def _zero_bias_tables(A_std: StratifiedMatrix, budget: int):
    """Per-stratum arrays of W(pi_dagger)-W(pi), W(pi_ddagger)-W(pi) and masses."""
    layout = A_std.layout
    mr = moments(A_std)
    n_comp = _composite_count(layout)
    support_sizes = []
    tables = []
    for k, (b, s) in enumerate(zip(A_std.blocks, layout.sizes)):
        r2 = mr.stratum_ratios[k]
        if r2 <= 0 or s < 2:
            support_sizes.append(0)
            tables.append(None)
            continue
        mass = zero_bias_masses(b, mr.stratum_variances[k]).ravel()
        support = np.flatnonzero(mass > 0)
        support_sizes.append(support.size)
        tables.append((r2, mass, support))
    used = n_comp * max(1, sum(support_sizes))
    _check_budget(used, budget, "verify_zero_bias")
    out = []
    for (b, s), tab in zip(zip(A_std.blocks, layout.sizes), tables):
        if tab is None:
            out.append(None)
            continue
        r2, mass, support = tab
        perms = _local_perms(s)
        rows = np.arange(s)
        base = b[rows[None, :], perms].sum(axis=1)
        d_dag = np.empty((perms.shape[0], support.size))
        d_ddag = np.empty_like(d_dag)
        quads = np.array(np.unravel_index(support, (s,) * 4)).T
        for pidx, pl in enumerate(perms):
            for sidx, (i, j, p, q) in enumerate(quads):
                dag, ddag = pi_dagger(pl, i, j, p, q)
                d_dag[pidx, sidx] = b[rows, dag].sum() - base[pidx]
                d_ddag[pidx, sidx] = b[rows, ddag].sum() - base[pidx]
        out.append((r2, mass[support], base, d_dag, d_ddag))
    return out, used


def _difference_quotient(x, y, degree):
    """``(x^d - y^d)/(x - y)`` written as a polynomial, exact at ``x = y``."""
    return sum(x ** m * y ** (degree - 1 - m) for m in range(degree))


def verify_zero_bias(A: StratifiedMatrix, test_degree: int = 2, budget: int = DEFAULT_BUDGET,
                     tol: float = 1e-8) -> VerificationReport:
    """Check ``var(W) E f'(W*) = E[W f(W)]`` for ``f(x) = x^d`` by enumeration.

    The statistic is standardized first. The average over ``U`` is taken in
    closed form, ``E_U f'(U a + (1-U) b) = (f(a) - f(b))/(a - b)``.
    """
    if test_degree not in (1, 2, 3):
        raise ValueError("test_degree must be 1, 2 or 3")
    A_std = transform(A, "standardize")  # raises DegenerateVariance
    key = ("zero_bias_tables", budget)
    if key not in A._cache:
        A._cache[key] = _zero_bias_tables(A_std, budget)
    tables, used = A._cache[key]
    layout = A.layout
    # coupling tables index permutations in itertools order, so reuse their sums
    sums = [tab[2] if tab is not None else kernels.perm_sums(b) for b, tab in zip(A_std.blocks, tables)]
    grids = np.meshgrid(*[np.arange(len(s)) for s in sums], indexing="ij")
    idx = [g.ravel() for g in grids]
    w = np.sum([s[i] for s, i in zip(sums, idx)], axis=0)
    d = test_degree
    lhs = float(np.mean(w ** (d + 1)))
    var_w = float(np.mean(w ** 2) - np.mean(w) ** 2)
    rhs_terms = []
    for k, tab in enumerate(tables):
        if tab is None:
            continue
        r2, mass, base, d_dag, d_ddag = tab
        loc = idx[k]
        wd = w[:, None] + d_dag[loc]
        wdd = w[:, None] + d_ddag[loc]
        g = _difference_quotient(wd, wdd, d)
        rhs_terms.append(r2 * float(np.mean(g @ mass)))
    rhs = var_w * math.fsum(rhs_terms)
    gap = abs(lhs - rhs)
    return VerificationReport(
        f"zero_bias_degree_{d}", gap, used, gap <= tol, tol,
        {"E[W f(W)]": lhs, "var(W) E f'(W*)": rhs},
    )


def verify_pi_dagger(A: StratifiedMatrix, budget: int = DEFAULT_BUDGET) -> VerificationReport:
    """Structural checks of ``pi_dagger`` over every outcome with distinct indices.

    For each stratum, local permutation and ``(i, j, p, q)`` with ``i != j`` and
    ``p != q``: the result is a bijection, agrees with ``pi`` off
    ``{i, j, pi^-1(p), pi^-1(q)}``, sends ``{i, j}`` onto ``{p, q}``, and
    ``pi_ddagger`` differs from it by the transposition of ``i, j``. Then, for
    each fixed quadruple, the images of the other units must hit each of the
    ``(n_k - 2)!`` completions equally often.
    """
    layout = A.layout
    used = sum(math.factorial(s) * (s * (s - 1)) ** 2 for s in layout.sizes if s >= 2)
    _check_budget(used, budget, "verify_pi_dagger")
    structural_failures = 0
    uniformity_failures = 0
    outcomes = 0
    for s in layout.sizes:
        if s < 2:
            continue
        perms = _local_perms(s)
        completions = math.factorial(s - 2)
        expected_count = perms.shape[0] // completions
        full = np.arange(s)
        for i, j, p, q in itertools.product(range(s), repeat=4):
            if i == j or p == q:
                continue
            counts: dict[tuple, int] = {}
            rest = [m for m in range(s) if m not in (i, j)]
            for pl in perms:
                outcomes += 1
                dag, ddag = pi_dagger(pl, i, j, p, q)
                inv = np.empty(s, dtype=np.int64)
                inv[pl] = full
                touched = {i, j, int(inv[p]), int(inv[q])}
                off = [m for m in range(s) if m not in touched]
                ok = (
                    np.array_equal(np.sort(dag), full)
                    and {int(dag[i]), int(dag[j])} == {p, q}
                    and np.array_equal(dag[off], pl[off])
                    and np.count_nonzero(dag != pl) <= 4
                    and set(np.flatnonzero(ddag != dag).tolist()) == {i, j}
                )
                if not ok:
                    structural_failures += 1
                key = tuple(int(x) for x in dag[rest])
                counts[key] = counts.get(key, 0) + 1
            if len(counts) != completions or any(c != expected_count for c in counts.values()):
                uniformity_failures += 1
    worst = float(structural_failures + uniformity_failures)
    return VerificationReport(
        "pi_dagger", worst, used, worst == 0, 0.0,
        {"outcomes": outcomes, "structural_failures": structural_failures,
         "uniformity_failures": uniformity_failures},
    )
