"""Kolmogorov and Wasserstein distances from a discrete law to N(0, 1).

Both are exact for a finite set of atoms: the Kolmogorov gap is attained at
an atom or just left of it, and ``|F - Phi|`` is integrated piecewise with the
antiderivative ``t Phi(t) + phi(t)`` of ``Phi``.
"""
import math

import numpy as np
from scipy.special import ndtr, ndtri

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _int_cdf(x):
    """Antiderivative of Phi vanishing at -inf."""
    return x * ndtr(x) + _pdf(x)


def _gap_integral(a, b, c):
    """``int_a^b |c - Phi(t)| dt`` for arrays with ``a <= b``, ``0 <= c <= 1``; uses ``a, b <= 0`` accuracy."""
    cc = np.clip(c, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        t = np.clip(ndtri(cc), a, b)
    return cc * (t - a) - (_int_cdf(t) - _int_cdf(a)) + (_int_cdf(b) - _int_cdf(t)) - cc * (b - t)


def kolmogorov_to_normal(x, cdf_right, cdf_left):
    """``sup_t |F(t) - Phi(t)|`` given sorted atoms, ``F(x)`` and ``F(x-)``."""
    x = np.asarray(x, dtype=float)
    phi = ndtr(x)
    return float(max(np.max(np.abs(cdf_right - phi)), np.max(np.abs(cdf_left - phi))))


def wasserstein_to_normal(x, cdf_right, sf_right):
    """``int |F(t) - Phi(t)| dt`` for sorted atoms ``x``.

    ``cdf_right[i] = F(x_i)`` and ``sf_right[i] = 1 - F(x_i)`` are passed
    separately so upper-tail masses keep full relative precision.
    """
    x = np.asarray(x, dtype=float)
    cdf_right = np.asarray(cdf_right, dtype=float)
    sf_right = np.asarray(sf_right, dtype=float)
    total = [float(_int_cdf(x[0])), float(_pdf(x[-1]) - x[-1] * ndtr(-x[-1]))]
    if x.size > 1:
        a, b = x[:-1], x[1:]
        c, s = cdf_right[:-1], sf_right[:-1]
        left = (a + b) <= 0
        # intervals right of zero are reflected: |c - Phi(t)| = |(1 - c) - Phi(-t)|
        part = np.where(
            left,
            _gap_integral(a, b, c),
            _gap_integral(-b, -a, s),
        )
        total.append(float(np.sum(part)))
    return math.fsum(total)
