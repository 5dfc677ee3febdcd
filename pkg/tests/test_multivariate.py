import math

import numpy as np
import pytest

from conftest import random_matrix
from stratperm.core import StratifiedMatrix, transform
from stratperm.errors import DomainError, LayoutMismatch, NotStandardized, SingularCovariance
from stratperm.multivariate import (MultiStatistic, gram_matrix, inner_product_K, rate_convex_sets,
                                    rate_linear_combination, simulate_multi, standardize_multi)
from stratperm.rng import RandomSource


def random_multi(rng, sizes, H):
    return MultiStatistic.from_components([random_matrix(rng, sizes) for _ in range(H)])


class TestInnerProduct:
    def test_standardized_unit(self, rng):
        S = transform(random_matrix(rng, (4, 3)), "standardize")
        assert inner_product_K(S, S) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_support(self, rng):
        a = StratifiedMatrix.from_blocks([rng.standard_normal((3, 3)), np.zeros((2, 2))])
        b = StratifiedMatrix.from_blocks([np.zeros((3, 3)), rng.standard_normal((2, 2))])
        assert inner_product_K(a, b) == 0.0

    def test_small_example(self):
        g = StratifiedMatrix.from_blocks([[[-0.5, 0.5], [0.5, -0.5]]])
        assert inner_product_K(g, g) == 1.0

    def test_symmetric_and_cauchy_schwarz(self, rng):
        for _ in range(20):
            g, h = random_matrix(rng, (3, 4)), random_matrix(rng, (3, 4))
            assert inner_product_K(g, h) == inner_product_K(h, g)
            assert abs(inner_product_K(g, h)) <= math.sqrt(inner_product_K(g, g) * inner_product_K(h, h)) + 1e-12

    def test_layout_mismatch(self, rng):
        with pytest.raises(LayoutMismatch):
            inner_product_K(random_matrix(rng, (3,)), random_matrix(rng, (2, 1)))


class TestStandardize:
    def test_gram_identity(self, rng):
        s = standardize_multi(random_multi(rng, (4, 5), 3))
        np.testing.assert_allclose(gram_matrix(s), np.eye(3), atol=1e-10)

    def test_orthonormal_input_unchanged(self, rng):
        s = standardize_multi(random_multi(rng, (4, 5), 2))
        again = standardize_multi(s)
        for a, b in zip(s.components, again.components):
            assert a.allclose(b, atol=1e-10)

    def test_duplicate_is_singular(self, rng):
        g = random_matrix(rng, (4,))
        with pytest.raises(SingularCovariance):
            standardize_multi(MultiStatistic.from_components([g, g]))

    def test_simulated_covariance(self, rng):
        s = standardize_multi(random_multi(rng, (5, 6), 2))
        m = 100_000
        g = simulate_multi(s, m, RandomSource(3))
        assert np.all(np.abs(g.mean(0)) < 5 / math.sqrt(m))
        c = np.cov(g.T)
        for i in range(2):
            for j in range(2):
                se = np.std((g[:, i] - g[:, i].mean()) * (g[:, j] - g[:, j].mean())) / math.sqrt(m)
                assert abs(c[i, j] - (i == j)) < 5 * se

    def test_json_round_trip(self, rng):
        m = random_multi(rng, (2, 3), 2)
        back = MultiStatistic.from_json(m.to_json())
        assert all(a == b for a, b in zip(m.components, back.components))


class TestRates:
    def test_single_component(self, rng):
        s = standardize_multi(random_multi(rng, (4,), 1))
        assert rate_linear_combination(s, [1.0]).rate_quantity == s.components[0].max_abs()

    def test_basis_vectors(self, rng):
        s = standardize_multi(random_multi(rng, (4, 3), 3))
        for h in range(3):
            e = np.eye(3)[h]
            assert rate_linear_combination(s, e).rate_quantity == s.components[h].max_abs()

    def test_sign_invariance(self, rng):
        s = standardize_multi(random_multi(rng, (4, 3), 2))
        b = np.array([0.6, 0.8])
        assert rate_linear_combination(s, b).rate_quantity == rate_linear_combination(s, -b).rate_quantity

    def test_disjoint_components(self, rng):
        # each component standardized on its own stratum
        g1 = transform(StratifiedMatrix.from_blocks([rng.standard_normal((3, 3)), np.zeros((3, 3))]), "standardize")
        g2 = transform(StratifiedMatrix.from_blocks([np.zeros((3, 3)), rng.standard_normal((3, 3))]), "standardize")
        m = MultiStatistic.from_components([g1, g2])
        b = np.array([1, 1]) / math.sqrt(2)
        expected = max(g1.max_abs(), g2.max_abs()) / math.sqrt(2)
        assert rate_linear_combination(m, b).rate_quantity == pytest.approx(expected, rel=1e-14)

    def test_requires_standardized(self, rng):
        with pytest.raises(NotStandardized):
            rate_linear_combination(random_multi(rng, (4,), 2), [1.0, 0.0])

    def test_requires_unit_vector(self, rng):
        s = standardize_multi(random_multi(rng, (4,), 2))
        with pytest.raises(DomainError):
            rate_linear_combination(s, [1.0, 1.0])

    def test_convex_zero(self):
        assert rate_convex_sets(3, 0.0, 10, 2) == 0.0

    def test_convex_example(self):
        assert rate_convex_sets(1, 0.5, 2, 1) == pytest.approx(0.75 + 0.5 + 0.5 ** 1.5 + 0.25, abs=1e-12)
        assert rate_convex_sets(1, 0.5, 2, 1) == pytest.approx(1.8536, abs=1e-4)

    def test_convex_domain(self):
        with pytest.raises(DomainError):
            rate_convex_sets(1, 0.1, 3, 3)

    def test_convex_order(self):
        for H in (1, 2, 4):
            for n in (100, 1000, 10_000):
                for K in (1, 5, 20):
                    b = (n - K) ** -0.5
                    ratio = rate_convex_sets(H, b, n, K) / (H ** 3.25 * K / (n - K) ** 0.5)
                    assert 0.5 <= ratio <= 4 + 1e-9 or ratio <= 4 * (1 + n / (n - K))
