"""Zero-inflated Poisson and negative binomial regression."""

from .distributions import (FAMILIES, ZINB, ZIP, count_logpmf, link_eval, linear_predictors,
                            logpmf, moments, pmf, support_bound)
from .gof import (GofResult, chisq_statistic, chisq_table, expected_frequencies, gof_chisq,
                  observed_frequencies, pool_bins)
from .model import (CONVERGED, MAX_ITER, SINGULAR, ConvergenceError, ZIFit, ZIParams, ZISpec,
                    fit_mle, initial_params, loglik, loglik_and_grad, numeric_hessian, predict,
                    significance_stars)
