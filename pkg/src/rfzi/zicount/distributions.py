"""Zero-inflated Poisson / negative binomial densities and moments.

With mixing weight ``pi`` on a point mass at zero:

    P(Y = y) = pi * [y == 0] + (1 - pi) * f(y)

where ``f`` is Poisson(lam) or NB(mean lam, shape theta) with variance
``lam + lam**2 / theta``.  Everything is evaluated in log space.
"""

import numpy as np
from scipy.special import expit, gammaln, log_expit
from scipy.stats import nbinom, poisson

ZIP = "zip"
ZINB = "zinb"
FAMILIES = (ZIP, ZINB)


def check_family(family):
    family = str(family).lower()
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    return family


def _design(cov, n_coef):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim <= 1:
        cov = cov.reshape(-1, n_coef - 1) if n_coef > 1 else cov.reshape(-1, 0)
    if cov.shape[1] != n_coef - 1:
        raise ValueError(f"expected {n_coef - 1} covariates, got {cov.shape[1]}")
    if not np.all(np.isfinite(cov)):
        raise ValueError("non-finite covariates")
    return cov


def linear_predictors(beta, gamma, x, z):
    """``(log lam, logit pi)`` for covariates given without the intercept."""
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    x = _design(x, beta.size)
    z = _design(z, gamma.size)
    return beta[0] + x @ beta[1:], gamma[0] + z @ gamma[1:]


def link_eval(beta, gamma, x, z):
    """Count mean ``lam = exp(beta'x)`` and zero weight ``pi = logistic(gamma'z)``."""
    eta, omega = linear_predictors(beta, gamma, x, z)
    return np.exp(eta), expit(omega)


def _check(y, lam, pi, theta, family):
    family = check_family(family)
    y = np.asarray(y)
    lam = np.asarray(lam, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("counts must be nonnegative integers")
    if np.any(~(lam > 0)):
        raise ValueError("lambda must be positive")
    if np.any((pi < 0) | (pi > 1)):
        raise ValueError("pi must lie in [0, 1]")
    if family == ZINB and (theta is None or np.any(~(np.asarray(theta) > 0))):
        raise ValueError("ZINB needs theta > 0")
    return family, y.astype(float), lam, pi


def count_logpmf(family, y, lam, theta=None):
    """Log density of the count component (no zero inflation)."""
    if family == ZIP:
        return y * np.log(lam) - lam - gammaln(y + 1)
    theta = np.asarray(theta, dtype=float)
    # theta*log(theta/(lam+theta)) written with log1p for large theta
    return (gammaln(y + theta) - gammaln(theta) - gammaln(y + 1)
            + y * (np.log(lam) - np.log(lam + theta))
            - theta * np.log1p(lam / theta))


def logpmf(family, y, lam, pi, theta=None):
    family, y, lam, pi = _check(y, lam, pi, theta, family)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        log_1m = np.log1p(-pi)
    lc = count_logpmf(family, y, lam, theta)
    return np.where(y == 0, np.logaddexp(log_pi, log_1m + lc), log_1m + lc)


def logpmf_logit(family, y, lam, omega, theta=None):
    """As :func:`logpmf` with the zero weight given on the logit scale."""
    y = np.asarray(y, dtype=float)
    lc = count_logpmf(family, y, lam, theta)
    log_1m = log_expit(-omega)
    return np.where(y == 0, np.logaddexp(log_expit(omega), log_1m + lc), log_1m + lc)


def pmf(family, y, lam, pi, theta=None):
    return np.exp(logpmf(family, y, lam, pi, theta))


def moments(family, lam, pi, theta=None):
    """Mean ``(1-pi) lam`` and variance of the zero-inflated count."""
    family = check_family(family)
    lam = np.asarray(lam, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any(lam < 0) or np.any((pi < 0) | (pi > 1)):
        raise ValueError("need lam >= 0 and pi in [0, 1]")
    mean = (1 - pi) * lam
    if family == ZIP:
        var = (1 - pi) * (lam + pi * lam ** 2)
    else:
        if theta is None or np.any(~(np.asarray(theta) > 0)):
            raise ValueError("ZINB needs theta > 0")
        var = (1 - pi) * (lam + (1.0 / np.asarray(theta) + pi) * lam ** 2)
    return mean, var


def support_bound(family, lam, theta=None, tail=1e-12):
    """A count above which every listed count component has mass below ``tail``."""
    lam_max = float(np.max(lam))
    if check_family(family) == ZIP:
        bound = poisson.isf(tail, lam_max)
    else:
        th = float(np.min(theta))
        bound = nbinom.isf(tail, th, th / (th + lam_max))
    return int(bound) + 1
