import math

import numpy as np
import pytest

from conftest import random_matrix
from stratperm.bounds import (BoundReport, f_value, kolmogorov_from_wasserstein, product_matrix, rate,
                              rate_product, theta, wasserstein_bound)
from stratperm.core import StratifiedMatrix, StratumLayout, transform
from stratperm.errors import DegenerateVariance, DomainError, InvariantViolation, ZeroStratumRatio

S2 = StratifiedMatrix.from_blocks([[[-0.5, 0.5], [0.5, -0.5]]])


class TestFValue:
    @pytest.mark.parametrize("n", [6, 7, 50, 10**6])
    def test_zero_ratio(self, n):
        assert f_value(n, 0.0) == 0.5

    def test_six_one(self):
        expected = 0.5 - 144 - 4 * math.sqrt(149) * math.sqrt(1.5)
        assert f_value(6, 1.0) == pytest.approx(expected, rel=1e-14)
        assert f_value(6, 1.0) == pytest.approx(-203.30, abs=5e-3)

    def test_large_n(self):
        assert 0.49 < f_value(10**6, 0.5) < 0.5

    def test_domain(self):
        with pytest.raises(DomainError):
            f_value(5, 0.1)
        with pytest.raises(DomainError):
            f_value(6, 1.5)


class TestTheta:
    def test_small_stratum_absent(self, rng):
        assert theta(random_matrix(rng, (6, 4))) is None

    def test_single_stratum_full_ratio(self, rng):
        # K = 1 gives R^2 = 1 for the truncated matrix
        A = random_matrix(rng, (6,))
        assert theta(A) == pytest.approx(f_value(6, 1.0))

    def test_matches_min_over_strata(self, rng):
        A = random_matrix(rng, (8, 9, 12))
        T = transform(A, "truncate")
        from stratperm.core import moments
        r2 = moments(T).stratum_ratios
        assert theta(A) == pytest.approx(min(f_value(n, r) for n, r in zip(A.layout.sizes, r2)))

    def test_many_strata_classic(self, rng):
        A = random_matrix(rng, (20,) * 30)
        th = theta(A)
        assert th > 0
        rep = rate(A, "theorem1")
        assert rep.regime == "classic" and rep.exponent_delta == 1.0
        # shrinking one stratum below six switches to the general branch
        blocks = list(A.blocks)
        blocks[0] = blocks[0][:5, :5]  # 5 units
        rep2 = rate(StratifiedMatrix.from_blocks(blocks), "theorem1")
        assert rep2.regime == "general" and rep2.exponent_delta == 0.5


class TestRate:
    def test_theorem1(self):
        rep = rate(S2, "theorem1")
        assert rep.rate_quantity == pytest.approx(0.25)
        assert rep.exponent_delta == 0.5 and rep.regime == "general"
        assert rep.constant_mode == "reported_raw" and rep.certified_bound is None

    def test_independent(self):
        assert rate(S2, "independent").rate_quantity == pytest.approx(1.0)

    def test_wasserstein_combine(self):
        rep = rate(S2, "wasserstein_combine")
        assert rep.rate_quantity == pytest.approx(0.25)
        assert rep.convenience_bound == pytest.approx(0.5)

    def test_convenience_uses_override(self):
        rep = rate(S2, "theorem1", constant_override=3.0)
        assert rep.convenience_bound == pytest.approx(3.0 * 0.5)

    def test_zero_ratio_stratum(self):
        A = StratifiedMatrix.from_blocks([[[0, 1], [1, 0]], np.ones((2, 2))])
        with pytest.raises(ZeroStratumRatio):
            rate(A, "wasserstein_combine")

    def test_degenerate(self):
        with pytest.raises(DegenerateVariance):
            rate(StratifiedMatrix.from_blocks([np.ones((3, 3))]))

    @pytest.mark.parametrize("method", ["theorem1", "independent", "wasserstein_combine", "columnwise"])
    def test_scale_invariance(self, rng, method):
        A = random_matrix(rng, (4, 7))
        q = rate(A, method).rate_quantity
        assert rate(A.scaled(13.7), method).rate_quantity == pytest.approx(q, rel=1e-12)

    def test_columnwise_nonnegative(self, rng):
        rep = rate(random_matrix(rng, (5, 3)), "columnwise")
        assert 0 <= rep.rate_quantity < math.inf

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            rate(S2, "magic")


class TestReportInvariants:
    def test_certified_requires_explicit(self):
        with pytest.raises(InvariantViolation):
            BoundReport("theorem1", 0.1, 0.5, None, "general", "reported_raw", certified_bound=1.0)

    def test_linear_exponent_requires_classic(self):
        with pytest.raises(InvariantViolation):
            BoundReport("theorem1", 0.1, 1.0, None, "general")

    def test_to_dict(self):
        d = rate(S2).to_dict()
        assert d["method"] == "theorem1" and d["rate_quantity"] == pytest.approx(0.25)


class TestWasserstein:
    def test_two_point(self):
        rep = wasserstein_bound(S2)
        assert rep.constant_mode == "explicit"
        assert rep.certified_bound == pytest.approx(40.0)

    def test_shrinks_with_rate(self, rng):
        big = wasserstein_bound(random_matrix(rng, (3,)))
        small = wasserstein_bound(random_matrix(rng, (40,) * 5))
        assert small.certified_bound < big.certified_bound


class TestKolmogorovFromWasserstein:
    @pytest.mark.parametrize("d_w,expected", [(0.0, 0.0), (1.0, 0.8932), (40.0, 5.649)])
    def test_values(self, d_w, expected):
        assert kolmogorov_from_wasserstein(d_w) == pytest.approx(expected, abs=5e-4)

    def test_monotone_concave(self):
        x = np.linspace(0, 5, 201)
        y = np.array([kolmogorov_from_wasserstein(v) for v in x])
        assert np.all(np.diff(y) >= 0)
        assert np.all(np.diff(y, 2) <= 1e-15)

    def test_negative(self):
        with pytest.raises(DomainError):
            kolmogorov_from_wasserstein(-0.1)


class TestProduct:
    def test_variance_example(self):
        from stratperm.core import moments
        lay = StratumLayout((3,))
        assert moments(product_matrix([1, 0, 0], [3, 1, 2], lay)).variance == pytest.approx(2 / 3)

    def test_constant_z(self):
        with pytest.raises(DegenerateVariance):
            rate_product([1, 1, 0, 0], [1, 2, 3, 4], StratumLayout((2, 2)))

    def test_matches_matrix_path(self, rng):
        for sizes in [(3,), (4, 5), (2, 6, 3)]:
            lay = StratumLayout(sizes)
            z = (rng.random(lay.n) < 0.5).astype(float)
            z[0], z[1] = 1.0, 0.0
            for r_ in lay.index_ranges:
                z[r_.start], z[r_.start + 1] = 1.0, 0.0
            r = rng.standard_normal(lay.n)
            a = rate_product(z, r, lay).rate_quantity
            b = rate(product_matrix(z, r, lay), "theorem1").rate_quantity
            assert a == pytest.approx(b, rel=1e-12)


def test_both_branches_reported(rng):
    from conftest import random_matrix
    for sizes in [(4, 5), (20,) * 30]:
        rep = rate(random_matrix(rng, sizes), "theorem1")
        assert rep.branches["general"] == pytest.approx(rep.rate_quantity ** 0.5)
        assert (rep.branches["classic"] is not None) == (rep.regime == "classic")
