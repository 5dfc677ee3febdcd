import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_matrix, random_sizes
from stratperm.core import (StratifiedMatrix, StratumLayout, finite_pop_moment, moments, statistic,
                            transform)
from stratperm.errors import DegenerateVariance, InvariantViolation
from stratperm.oracle import enumerate_distribution


def blocks_strategy(max_k=3, max_n=5):
    def one(n):
        return st.lists(st.lists(st.floats(-10, 10), min_size=n, max_size=n), min_size=n, max_size=n)
    return st.lists(st.integers(1, max_n), min_size=1, max_size=max_k).flatmap(
        lambda sizes: st.tuples(*[one(n) for n in sizes]))


class TestLayout:
    def test_ranges_cover_units(self):
        lay = StratumLayout((2, 3, 1))
        assert lay.n == 6 and lay.K == 3
        assert lay.starts == (0, 2, 5)
        covered = [i for r in lay.index_ranges for i in r]
        assert covered == list(range(6))
        assert lay.stratum_of().tolist() == [0, 0, 1, 1, 1, 2]

    @pytest.mark.parametrize("sizes", [(), (0,), (2, -1)])
    def test_rejects_bad_sizes(self, sizes):
        with pytest.raises(InvariantViolation):
            StratumLayout(sizes)


class TestMatrix:
    def test_rejects_non_square_block(self):
        with pytest.raises(InvariantViolation):
            StratifiedMatrix.from_blocks([np.zeros((2, 3))])

    def test_rejects_nonfinite(self):
        with pytest.raises(InvariantViolation):
            StratifiedMatrix.from_blocks([[[0.0, math.nan], [1.0, 0.0]]])

    def test_dense_round_trip(self, rng):
        A = random_matrix(rng, (2, 3))
        dense = A.to_dense()
        assert dense.shape == (5, 5)
        assert dense[0, 3] == 0.0
        assert StratifiedMatrix.from_dense(dense, A.layout) == A

    @given(blocks_strategy())
    def test_json_round_trip(self, blocks):
        A = StratifiedMatrix.from_blocks([np.array(b) for b in blocks])
        B = StratifiedMatrix.from_json(A.to_json())
        assert A == B
        assert json.loads(A.to_json())["sizes"] == list(A.layout.sizes)


class TestMoments:
    def test_swap_matrix(self, swap2):
        m = moments(swap2)
        assert m.mean == 1.0 and m.variance == 1.0

    def test_constant_matrix_is_degenerate(self):
        A = StratifiedMatrix.from_blocks([np.full((3, 3), 2.5), np.full((2, 2), 2.5)])
        m = moments(A)
        assert m.mean == pytest.approx(5 * 2.5)
        assert m.variance == 0.0
        assert m.stratum_ratios is None and m.stratum_beta is None and m.third_moment_rate is None

    def test_two_swap_blocks(self):
        A = StratifiedMatrix.from_blocks([[[0, 1], [1, 0]], [[0, 1], [1, 0]]])
        m = moments(A)
        assert (m.mean, m.variance) == (2.0, 2.0)
        assert m.stratum_ratios == (0.5, 0.5)

    def test_singleton_stratum_is_deterministic(self):
        A = StratifiedMatrix.from_blocks([[[7.0]], [[0, 1], [1, 0]]])
        m = moments(A)
        assert m.mean == 8.0 and m.stratum_variances[0] == 0.0

    def test_matches_enumeration(self, rng):
        for _ in range(30):
            A = random_matrix(rng, random_sizes(rng))
            d = enumerate_distribution(A)
            m = moments(A)
            assert abs(d.mean() - m.mean) < 1e-10
            assert abs(d.variance() - m.variance) < 1e-10

    def test_variance_forms_agree(self, rng):
        # squared deviations of A^0 versus sum a^2 minus the mean corrections
        for _ in range(20):
            A = random_matrix(rng, random_sizes(rng, min_size=2))
            alt = 0.0
            for b in A.blocks:
                nk = b.shape[0]
                rbar, cbar, g = b.mean(1), b.mean(0), b.mean()
                alt += (np.sum(b ** 2) - nk * np.sum(rbar ** 2) - nk * np.sum(cbar ** 2) + nk * nk * g * g) / (nk - 1)
            assert moments(A).variance == pytest.approx(alt, abs=1e-10)

    def test_ratios_sum_to_one(self, rng):
        A = random_matrix(rng, (3, 4, 2))
        m = moments(A)
        assert math.fsum(m.stratum_ratios) == pytest.approx(1.0, abs=1e-14)
        assert math.fsum(m.stratum_variances) == pytest.approx(m.variance, rel=1e-14)


class TestTransform:
    def test_center_swap(self, swap2):
        c = transform(swap2, "center")
        np.testing.assert_allclose(c.blocks[0], [[-0.5, 0.5], [0.5, -0.5]])

    @given(blocks_strategy())
    def test_center_zeroes_margins(self, blocks):
        A = StratifiedMatrix.from_blocks([np.array(b) for b in blocks])
        c = transform(A, "center")
        for b0, b in zip(c.blocks, A.blocks):
            tol = 1e-12 * max(1.0, np.abs(b).max()) * b.shape[0] * 10
            assert np.abs(b0.sum(0)).max() <= tol and np.abs(b0.sum(1)).max() <= tol

    def test_center_keeps_variance(self, rng):
        A = random_matrix(rng, (4, 3))
        v = moments(A).variance
        assert moments(transform(A, "center")).variance == pytest.approx(v, rel=1e-12)

    def test_standardize(self, rng):
        A = random_matrix(rng, (4, 5, 2))
        s = moments(transform(A, "standardize"))
        assert abs(s.mean) < 1e-12 and abs(s.variance - 1) < 1e-12

    def test_standardize_idempotent(self, rng):
        S = transform(random_matrix(rng, (4, 3)), "standardize")
        assert transform(S, "standardize").allclose(S, atol=1e-14)

    def test_truncate_keeps_boundary(self):
        S = StratifiedMatrix.from_blocks([[[-0.5, 0.5], [0.5, -0.5]]])
        assert transform(S, "truncate").allclose(S)

    def test_truncate_zeroes_large_entries(self, rng):
        A = random_matrix(rng, (3,))
        S, T = transform(A, "standardize"), transform(A, "truncate")
        big = np.abs(S.blocks[0]) > 0.5
        assert np.all(T.blocks[0][big] == 0) and np.all(T.blocks[0][~big] == S.blocks[0][~big])

    def test_column_center(self, rng):
        A = random_matrix(rng, (3, 2))
        C = transform(A, "column_center")
        for b in C.blocks:
            assert np.abs(b.mean(0)).max() < 1e-14

    def test_degenerate_standardize(self):
        with pytest.raises(DegenerateVariance):
            transform(StratifiedMatrix.from_blocks([np.ones((2, 2))]), "standardize")

    def test_unknown_mode(self, swap2):
        with pytest.raises(ValueError):
            transform(swap2, "rotate")


class TestFinitePopMoment:
    def test_third(self):
        assert finite_pop_moment([1, 2, 3], 3) == pytest.approx(2 / 3)

    def test_second(self):
        assert finite_pop_moment([1, 2, 3], 2) == pytest.approx(2 / 3)

    def test_constant(self):
        assert finite_pop_moment([4, 4, 4, 4], 5) == 0.0


def test_statistic_identity(swap2):
    assert statistic(swap2, [0, 1]) == 0.0
    assert statistic(swap2, [1, 0]) == 2.0
