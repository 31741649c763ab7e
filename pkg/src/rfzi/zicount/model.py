"""Maximum-likelihood fitting of zero-inflated count regressions.

Parameters are packed as ``[beta, gamma, log_theta]``: count coefficients
(log link), zero-inflation coefficients (logit link), then the log of the
negative-binomial shape for ZINB.  The log-likelihood comes with an
analytic gradient; the fit runs BFGS on it and finishes with damped
Newton steps on a finite-difference Hessian of that gradient, which also
supplies the Wald standard errors.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, expit, gammaln, log_expit, logit
from scipy.stats import norm

from ..dataset import DataError
from .distributions import ZINB, ZIP, check_family, link_eval, moments

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max-iter"
SINGULAR = "singular-hessian"


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ZISpec:
    family: str
    count_covariates: tuple = ()
    zero_covariates: tuple = ()
    fixed_log_theta: float | None = None  # ZINB only: hold the shape fixed

    def __post_init__(self):
        object.__setattr__(self, "family", check_family(self.family))
        object.__setattr__(self, "count_covariates", tuple(self.count_covariates))
        object.__setattr__(self, "zero_covariates", tuple(self.zero_covariates))
        if self.fixed_log_theta is not None and self.family != ZINB:
            raise ValueError("fixed_log_theta only applies to ZINB")

    @property
    def n_beta(self):
        return len(self.count_covariates) + 1

    @property
    def n_gamma(self):
        return len(self.zero_covariates) + 1

    @property
    def free_theta(self):
        return self.family == ZINB and self.fixed_log_theta is None

    @property
    def n_params(self):
        return self.n_beta + self.n_gamma + int(self.free_theta)

    def labels(self):
        """``(component, term)`` per entry of the packed parameter vector."""
        out = [("count", "(Intercept)")] + [("count", c) for c in self.count_covariates]
        out += [("zero", "(Intercept)")] + [("zero", c) for c in self.zero_covariates]
        if self.free_theta:
            out.append(("count", "Log(theta)"))
        return out


@dataclass(frozen=True)
class ZIParams:
    beta: np.ndarray
    gamma: np.ndarray
    log_theta: float | None = None

    @property
    def theta(self):
        return None if self.log_theta is None else float(np.exp(self.log_theta))

    def to_vector(self, spec):
        parts = [np.asarray(self.beta, float), np.asarray(self.gamma, float)]
        if spec.free_theta:
            parts.append([self.log_theta if self.log_theta is not None else 0.0])
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, spec, v):
        v = np.asarray(v, dtype=float)
        if v.size != spec.n_params:
            raise ValueError(f"expected {spec.n_params} parameters, got {v.size}")
        kb, kg = spec.n_beta, spec.n_gamma
        log_theta = None
        if spec.family == ZINB:
            log_theta = float(v[kb + kg]) if spec.free_theta else spec.fixed_log_theta
        return cls(v[:kb].copy(), v[kb:kb + kg].copy(), log_theta)


def _check_data(spec, data):
    if tuple(data.x_names) != spec.count_covariates or tuple(data.z_names) != spec.zero_covariates:
        raise ValueError("dataset covariates do not match the model specification")


def _loglik_grad(spec, v, X, Z, y, want_grad=True):
    kb, kg = spec.n_beta, spec.n_gamma
    eta = X @ v[:kb]
    omega = Z @ v[kb:kb + kg]
    zero = y == 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        lam = np.exp(eta)
        if spec.family == ZIP:
            lc = y * eta - lam - gammaln(y + 1)
            dlc_eta = y - lam
            dlc_alpha = None
        else:
            alpha = v[kb + kg] if spec.free_theta else spec.fixed_log_theta
            theta = np.exp(alpha)
            ratio = np.exp(eta - alpha)  # lam / theta
            log_lt = np.logaddexp(eta, alpha)  # log(lam + theta)
            lc = (gammaln(y + theta) - gammaln(theta) - gammaln(y + 1)
                  + y * (eta - log_lt) - theta * np.log1p(ratio))
            frac = 1.0 / (1.0 + ratio)  # theta / (lam + theta)
            dlc_eta = (y - lam) * frac
            dlc_alpha = theta * (digamma(y + theta) - digamma(theta) - np.log1p(ratio)
                                 + (lam - y) / (lam + theta))
        log_pi = log_expit(omega)
        log_1m = log_expit(-omega)
        ll_i = np.where(zero, np.logaddexp(log_pi, log_1m + lc), log_1m + lc)
        ll = float(np.sum(ll_i))
    if not np.isfinite(ll):
        return -np.inf, (np.full(v.size, np.nan) if want_grad else None)
    if not want_grad:
        return ll, None
    # posterior weight of the count state among observed zeros
    # (ll_i of positive counts can be very negative; keep them out of exp)
    ll_z = np.where(zero, ll_i, 0.0)
    w = np.where(zero, np.exp(np.where(zero, log_1m + lc, 0.0) - ll_z), 1.0)
    d_omega = np.where(zero, np.exp(np.where(zero, log_pi, 0.0) - ll_z), 0.0) - expit(omega)
    grad = [X.T @ (w * dlc_eta), Z.T @ d_omega]
    if spec.free_theta:
        grad.append([np.sum(w * dlc_alpha)])
    return ll, np.concatenate(grad)


def loglik(spec, params, data):
    _check_data(spec, data)
    v = params.to_vector(spec) if isinstance(params, ZIParams) else np.asarray(params, float)
    return _loglik_grad(spec, v, data.X, data.Z, data.counts.astype(float), want_grad=False)[0]


def loglik_and_grad(spec, params, data):
    """Log-likelihood and its gradient in the packed parameter vector."""
    _check_data(spec, data)
    v = params.to_vector(spec) if isinstance(params, ZIParams) else np.asarray(params, float)
    return _loglik_grad(spec, v, data.X, data.Z, data.counts.astype(float))


def numeric_hessian(grad_fn, v, rel_step=1e-5):
    """Central differences of an analytic gradient, symmetrized."""
    k = v.size
    H = np.empty((k, k))
    for j in range(k):
        h = rel_step * max(1.0, abs(v[j]))
        e = np.zeros(k)
        e[j] = h
        H[:, j] = (grad_fn(v + e) - grad_fn(v - e)) / (2 * h)
    return 0.5 * (H + H.T)


def initial_params(spec, data):
    """Starting point: log-linear fit on positive counts, logit of excess zeros."""
    X, Z, y = data.X, data.Z, data.counts.astype(float)
    pos = y > 0
    beta = np.zeros(spec.n_beta)
    if np.any(pos):
        sol, *_ = np.linalg.lstsq(X[pos], np.log(y[pos]), rcond=None)
        # match the first moment of the positive counts
        beta = sol
        beta[0] += np.log(y[pos].sum() / np.exp(X[pos] @ sol).sum())
    lam = np.exp(np.clip(X @ beta, -30, 30))
    p0 = np.exp(-lam) if spec.family == ZIP else 1.0 / (1.0 + lam)
    excess = (np.mean(y == 0) - p0.mean()) / max(1.0 - p0.mean(), 1e-8)
    gamma = np.zeros(spec.n_gamma)
    gamma[0] = logit(np.clip(excess, 0.01, 0.99))
    log_theta = 0.0 if spec.free_theta else spec.fixed_log_theta
    return ZIParams(beta, gamma, log_theta)


@dataclass(frozen=True, eq=False)
class ZIFit:
    spec: ZISpec
    params: ZIParams
    loglik: float
    covariance: np.ndarray | None
    se: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    convergence: str
    n_iter: int
    grad_max: float
    n_obs: int
    loglik_trace: list = field(default_factory=list)

    @property
    def vector(self):
        return self.params.to_vector(self.spec)

    @property
    def n_params(self):
        return self.spec.n_params

    @property
    def aic(self):
        return -2 * self.loglik + 2 * self.n_params

    def table(self):
        """Coefficient rows ordered count block (with Log(theta)) then zero block."""
        labels = self.spec.labels()
        order = sorted(range(len(labels)), key=lambda k: (labels[k][0] != "count", k))
        rows = []
        for k in order:
            comp, term = labels[k]
            rows.append({"component": comp, "term": term, "estimate": float(self.vector[k]),
                         "std_error": float(self.se[k]), "z_value": float(self.z_values[k]),
                         "p_value": float(self.p_values[k]), "signif": significance_stars(self.p_values[k])})
        return rows

    def predict(self, x, z):
        return predict(self, x, z)


def significance_stars(p):
    if not np.isfinite(p):
        return ""
    for cut, mark in ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, ".")):
        if p < cut:
            return mark
    return ""


def _check_rank(data):
    for name, M in (("count", data.X), ("zero", data.Z)):
        if np.linalg.matrix_rank(M) < M.shape[1]:
            raise DataError(f"{name}-component design matrix is rank deficient")


DECREMENT_TOL = 1e-13


def _newton_decrement(H, g):
    try:
        d = float(-0.5 * g @ np.linalg.solve(H, g))
    except np.linalg.LinAlgError:
        return np.inf
    return d if d >= 0 else np.inf


def fit_mle(spec, data, init=None, maxiter=500, gtol=1e-6):
    """Maximize the log-likelihood; standard errors from the observed information.

    Converged means the gradient max-norm fell below ``gtol``, or that the
    Newton decrement (the loglik gain a full Newton step predicts) is below
    the rounding level of the loglik itself, where no step can improve it
    in double precision.  A fit that
    runs out of iterations is returned flagged ``max-iter``; when the
    Hessian is not negative definite standard errors are NaN and the fit
    is flagged ``singular-hessian``.
    """
    _check_data(spec, data)
    _check_rank(data)
    X, Z, y = data.X, data.Z, data.counts.astype(float)
    v0 = (init or initial_params(spec, data)).to_vector(spec)

    def neg(v):
        ll, g = _loglik_grad(spec, v, X, Z, y)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(v)
        return -ll, -g

    def grad(v):
        return _loglik_grad(spec, v, X, Z, y)[1]

    trace = [_loglik_grad(spec, v0, X, Z, y, want_grad=False)[0]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(neg, v0, jac=True, method="BFGS",
                       callback=lambda xk: trace.append(-neg(xk)[0]),
                       options={"gtol": gtol, "maxiter": maxiter, "norm": np.inf})
    v, n_iter = res.x, int(res.nit)
    ll, g = _loglik_grad(spec, v, X, Z, y)
    H = None
    # Newton polishing: BFGS often stalls on precision loss just short of gtol
    while np.max(np.abs(g)) >= gtol and n_iter < maxiter:
        H = numeric_hessian(grad, v)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or g @ step <= 0:
            break
        t = 1.0
        while t > 1e-10:
            ll_new, g_new = _loglik_grad(spec, v + t * step, X, Z, y)
            if ll_new >= ll:
                break
            t *= 0.5
        else:
            break
        v, ll, g = v + t * step, ll_new, g_new
        trace.append(ll)
        n_iter += 1
        H = None
    grad_max = float(np.max(np.abs(g)))
    if H is None:
        H = numeric_hessian(grad, v)
    status = CONVERGED if grad_max < gtol or _newton_decrement(H, g) < DECREMENT_TOL * max(1.0, abs(ll)) \
        else MAX_ITER
    cov = None
    se = np.full(v.size, np.nan)
    try:
        evals = np.linalg.eigvalsh(-H)
        if np.min(evals) <= 1e-10 * max(1.0, np.max(np.abs(evals))):
            raise np.linalg.LinAlgError
        cov = np.linalg.inv(-H)
        cov = 0.5 * (cov + cov.T)
        se = np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:
        status = SINGULAR if status == CONVERGED else status
        log.warning("observed information is singular; standard errors unavailable")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = v / se
    p = 2 * norm.sf(np.abs(z))
    if status != CONVERGED:
        log.warning("ZI fit did not converge: %s (max |grad| = %.3g)", status, grad_max)
    return ZIFit(spec, ZIParams.from_vector(spec, v), ll, cov, se, z, p, status,
                 n_iter, grad_max, data.n_obs, trace)


def predict(fit, x, z):
    """Per-group ``(expected_count, zero_probability, count_mean)``.

    ``x`` and ``z`` exclude the intercept column.
    """
    p = fit.params
    lam, pi = link_eval(p.beta, p.gamma, x, z)
    mean, _ = moments(fit.spec.family, lam, pi, p.theta)
    if fit.spec.family == ZIP:
        p0 = np.exp(-lam)
    else:
        p0 = np.exp(-p.theta * np.log1p(lam / p.theta))
    return mean, pi + (1 - pi) * p0, lam
