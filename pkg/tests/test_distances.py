import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from stratperm.distances import kolmogorov_to_normal, wasserstein_to_normal


def quad_wasserstein(x, p):
    x, p = np.asarray(x, float), np.asarray(p, float)
    F = lambda t: p[x <= t].sum()
    # split at atoms and at the points where the step level crosses Phi
    crossings = norm.ppf(np.clip(np.cumsum(p), 1e-300, 1 - 1e-16)).tolist()
    pts = sorted(set(x.tolist()) | {t for t in crossings if -12 < t < 12})
    edges = [-12.0] + pts + [12.0]
    return sum(integrate.quad(lambda t: abs(F(t) - norm.cdf(t)), a, b, epsabs=1e-13)[0]
               for a, b in zip(edges[:-1], edges[1:]))


def law(x, p):
    c = np.cumsum(p)
    return np.asarray(x, float), c, c - np.asarray(p), 1 - c


def test_two_point():
    x, r, l, s = law([-1, 1], [0.5, 0.5])
    closed = 2 * (norm.pdf(1) - norm.sf(1)) + 2 * (norm.cdf(1) + norm.pdf(1) - norm.pdf(0) - 0.5)
    assert wasserstein_to_normal(x, r, s) == pytest.approx(closed, abs=1e-14)
    assert wasserstein_to_normal(x, r, s) == pytest.approx(0.5354, abs=1e-4)
    assert kolmogorov_to_normal(x, r, l) == pytest.approx(norm.cdf(1) - 0.5, abs=1e-15)


def test_point_mass():
    x, r, l, s = law([0.0], [1.0])
    assert wasserstein_to_normal(x, r, s) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)
    assert kolmogorov_to_normal(x, r, l) == 0.5


@pytest.mark.parametrize("seed", range(5))
def test_against_quadrature(seed):
    g = np.random.default_rng(seed)
    x = np.sort(g.normal(size=7) * 1.5)
    p = g.dirichlet(np.ones(7))
    _, r, _, s = law(x, p)
    assert wasserstein_to_normal(x, r, s) == pytest.approx(quad_wasserstein(x, p), abs=1e-9)


def test_far_tail_atoms():
    x, r, l, s = law([-30.0, 30.0], [0.5, 0.5])
    # |1/2 - Phi| integrated over [-30, 30] plus vanishing tails
    assert wasserstein_to_normal(x, r, s) == pytest.approx(30.0 - 2 * norm.pdf(0), rel=1e-12)
