"""Small statistics helpers used by the reports and the test suite."""

from __future__ import annotations

import numpy as np
from scipy import stats as sps


def ks_statistic(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance against a CDF callable."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("no samples")
    f = np.asarray(cdf(x), dtype=float)
    upper = np.max(np.arange(1, n + 1) / n - f)
    lower = np.max(f - np.arange(n) / n)
    return float(max(upper, lower))


def ks_pvalue(d: float, n: int) -> float:
    """Exact-distribution p-value for a one-sample KS statistic."""
    return float(sps.kstwo.sf(d, n))


def ks_uniform(samples, lo: float, hi: float) -> float:
    """KS distance against the uniform distribution on [lo, hi]."""
    span = hi - lo
    if span <= 0:
        raise ValueError("empty interval")
    return ks_statistic(samples, lambda v: np.clip((v - lo) / span, 0.0, 1.0))


def two_sample_ks(a, b):
    """Two-sample KS distance and p-value."""
    res = sps.ks_2samp(np.asarray(a, float), np.asarray(b, float))
    return float(res.statistic), float(res.pvalue)


def chi2_gof_pvalue(samples, grid_x, pdf, n_bins: int = 40) -> float:
    """Chi-squared goodness-of-fit p-value against a tabulated density.

    Bins are equal-probability intervals built from the tabulated CDF,
    so every bin has the same expected count.
    """
    samples = np.asarray(samples, dtype=float)
    grid_x = np.asarray(grid_x, dtype=float)
    pdf = np.asarray(pdf, dtype=float)
    dx = grid_x[1] - grid_x[0]
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * dx)))
    cdf /= cdf[-1]
    # Strictly increasing section only, so the inverse is well defined.
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    edges = np.interp(np.linspace(0.0, 1.0, n_bins + 1), cdf[keep], grid_x[keep])
    counts, _ = np.histogram(samples, bins=edges)
    expected = len(samples) / n_bins
    if expected < 5:
        raise ValueError("too few samples per bin for a chi-squared test")
    chisq = float(np.sum((counts - expected) ** 2) / expected)
    return float(sps.chi2.sf(chisq, n_bins - 1))
