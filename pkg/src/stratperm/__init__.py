"""Normal approximation for stratified linear permutation statistics.

``W = sum_i a[i, pi(i)]`` with ``pi`` uniform over permutations that keep
every stratum in place. The package computes exact moments and Berry--Esseen
rate quantities, simulates and enumerates the law of ``W``, verifies the
Stein-method couplings behind the bounds, and applies them to stratified
designs, post-stratification and permutation tests.
"""
__version__ = "0.1.0"

from .bounds import (BoundReport, kolmogorov_from_wasserstein, product_matrix, rate, rate_product,
                     theta, wasserstein_bound)
from .core import MomentReport, StratifiedMatrix, StratumLayout, finite_pop_moment, moments, statistic, transform
from .designs import (ExperimentDesign, PostStratSpec, SamplingDesign, build_design_matrix,
                      design_variance, enumerate_post_stratified, estimate, event_probability,
                      rate_design, simulate_post_stratified)
from .errors import *  # noqa: F401,F403
from .inference import TestResult, iv_confidence_interval, iv_test, permutation_test
from .kernels import BACKEND
from .montecarlo import (SampleSummary, ecdf_kolmogorov_vs_normal, empirical_wasserstein_vs_normal,
                         simulate_statistic)
from .multivariate import (MultiStatistic, inner_product_K, rate_convex_sets, rate_linear_combination,
                           standardize_multi)
from .oracle import (ExactDistribution, enumerate_distribution, exact_distance, verify_pi_dagger,
                     verify_stein_pair, verify_zero_bias)
from .rng import DEFAULT_SEED, RandomSource
from .sampling import StratifiedPermutation, sample_permutation, stein_pair_draw, zero_bias_draw
