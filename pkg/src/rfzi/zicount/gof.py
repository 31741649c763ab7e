"""Chi-square goodness of fit on the frequency table of counts."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import chi2

from .distributions import ZIP, count_logpmf, support_bound
from .model import predict

MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class GofResult:
    statistic: float
    df: int
    p_value: float
    bins: list  # (low, high) inclusive; high None for the open tail
    observed: np.ndarray
    expected: np.ndarray


def expected_frequencies(fit, data, kmax=None):
    """Expected number of observations at each count 0..kmax under the fit.

    Sums, over observations, the fitted zero-inflated pmf of their group.
    """
    p = fit.params
    _, _, lam_g = predict(fit, data.group_x, data.group_z)
    pi_g = expit(p.gamma[0] + data.group_z @ p.gamma[1:])
    sizes = data.group_sizes()
    if kmax is None:
        kmax = max(int(data.counts.max(initial=0)),
                   support_bound(fit.spec.family, lam_g, p.theta, tail=1e-10))
    ks = np.arange(kmax + 1, dtype=float)
    lc = count_logpmf(fit.spec.family, ks[None, :], lam_g[:, None],
                      None if fit.spec.family == ZIP else p.theta)
    probs = (1 - pi_g)[:, None] * np.exp(lc)
    probs[:, 0] += pi_g
    return sizes @ probs


def observed_frequencies(counts, kmax):
    return np.bincount(np.minimum(np.asarray(counts), kmax + 1), minlength=kmax + 2)[:kmax + 1]


def pool_bins(expected, total, min_expected=MIN_EXPECTED):
    """Group counts 0, 1, 2, ... into bins with expected frequency >= ``min_expected``.

    Consecutive counts are merged left to right until a bin reaches the
    minimum; the remainder becomes an open right tail ``k >= low`` whose
    expectation is ``total`` minus everything before it, merged into the
    previous bin if it falls short.
    """
    bins, low, acc = [], 0, 0.0
    for k, e in enumerate(expected):
        acc += e
        if acc >= min_expected:
            bins.append([low, k])
            low, acc = k + 1, 0.0
    tail_expected = total - sum(float(np.sum(expected[a:b + 1])) for a, b in bins)
    if tail_expected >= min_expected or not bins:
        bins.append([low, None])
    else:
        bins[-1][1] = None
    return [tuple(b) for b in bins]


def chisq_statistic(observed, expected):
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    return float(np.sum((observed - expected) ** 2 / expected))


def chisq_table(observed, expected, n_params):
    """Pearson statistic, ``df = bins - 1 - n_params`` and upper-tail p-value."""
    observed = np.asarray(observed, dtype=float)
    if observed.size < 2:
        raise ValueError("fewer than 2 bins")
    stat = chisq_statistic(observed, expected)
    df = observed.size - 1 - int(n_params)
    p = float(chi2.sf(stat, df)) if df > 0 else float("nan")
    return stat, df, p


def gof_chisq(fit, data, min_expected=MIN_EXPECTED):
    counts = np.asarray(data.counts)
    expected = expected_frequencies(fit, data)
    bins = pool_bins(expected, float(counts.size), min_expected)
    obs, exp = [], []
    for low, high in bins:
        if high is None:
            obs.append(np.sum(counts >= low))
            exp.append(counts.size - float(np.sum(expected[:low])))
        else:
            obs.append(np.sum((counts >= low) & (counts <= high)))
            exp.append(float(np.sum(expected[low:high + 1])))
    if len(bins) < 2:
        raise ValueError("fewer than 2 bins after pooling")
    stat, df, p = chisq_table(obs, exp, fit.n_params)
    return GofResult(stat, df, p, bins, np.array(obs), np.array(exp))
