"""Delimited and text renderings of selection traces and count-model fits."""

import csv
import json
import math

import numpy as np

from .zicount import ZINB

COEF_COLUMNS = ("component", "term", "Estimate", "Std. Error", "z value", "Pr(>|z|)", "signif")
IMPORTANCE_COLUMNS = ("variable", "vi_mean", "vi_sd", "rank")


def _num(v):
    v = float(v)
    return "NA" if not math.isfinite(v) else repr(v)


def importance_rows(trace):
    rank = {j: r for r, j in enumerate(trace.ranked_vars, start=1)}
    return [(trace.names[j], trace.vi_mean[j], trace.vi_sd[j], rank[j]) for j in trace.ranked_vars]


def write_importance_csv(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IMPORTANCE_COLUMNS)
        for name, m, s, r in importance_rows(trace):
            w.writerow([name, _num(m), _num(s), r])


def coefficient_rows(fit):
    return [(r["component"], r["term"], r["estimate"], r["std_error"], r["z_value"],
             r["p_value"], r["signif"]) for r in fit.table()]


def write_coefficients_csv(fit, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COEF_COLUMNS)
        for comp, term, est, se, z, p, sig in coefficient_rows(fit):
            w.writerow([comp, term, _num(est), _num(se), _num(z), _num(p), sig])


def _json_num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def fit_to_dict(fit, gof=None):
    d = {
        "family": fit.spec.family,
        "count_covariates": list(fit.spec.count_covariates),
        "zero_covariates": list(fit.spec.zero_covariates),
        "convergence": fit.convergence,
        "loglik": fit.loglik,
        "aic": fit.aic,
        "n_obs": fit.n_obs,
        "n_params": fit.n_params,
        "n_iter": fit.n_iter,
        "grad_max": fit.grad_max,
        "theta": fit.params.theta,
        "coefficients": [{k: (_json_num(v) if isinstance(v, float) else v) for k, v in r.items()}
                         for r in fit.table()],
    }
    if gof is not None:
        d["gof"] = {"statistic": gof.statistic, "df": gof.df, "p_value": _json_num(gof.p_value),
                    "bins": [[lo, hi] for lo, hi in gof.bins],
                    "observed": [int(o) for o in gof.observed],
                    "expected": [float(e) for e in gof.expected]}
    return d


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _fmt(v, width=11, digits=4):
    v = float(v)
    if not math.isfinite(v):
        return "NA".rjust(width)
    return f"{v:{width}.{digits}f}"


def _fmt_p(p):
    p = float(p)
    if not math.isfinite(p):
        return "NA".rjust(10)
    return (f"{p:10.3g}" if p >= 2e-16 else "<2e-16".rjust(10))


def coefficient_text(fit, gof=None):
    """Two coefficient blocks, count then zero, in the familiar regression layout."""
    dist = "negbin" if fit.spec.family == ZINB else "poisson"
    blocks = {"count": f"Count model coefficients ({dist} with log link):",
              "zero": "Zero-inflation model coefficients (binomial with logit link):"}
    rows = coefficient_rows(fit)
    width = max([len(r[1]) for r in rows] + [12])
    out = []
    for comp in ("count", "zero"):
        out.append(blocks[comp])
        out.append(" " * width + f"{'Estimate':>11}{'Std. Error':>11}{'z value':>11}{'Pr(>|z|)':>10}")
        for c, term, est, se, z, p, sig in rows:
            if c == comp:
                out.append(f"{term:<{width}}{_fmt(est)}{_fmt(se)}{_fmt(z, digits=3)}{_fmt_p(p)} {sig}".rstrip())
        out.append("")
    if fit.spec.family == ZINB and fit.params.theta is not None:
        out.append(f"Theta = {fit.params.theta:.4f}")
    out.append(f"Log-likelihood: {fit.loglik:.3f} on {fit.n_params} Df; convergence: {fit.convergence}")
    if gof is not None:
        out.append(f"Goodness-of-fit test: chi2 = {gof.statistic:.3f}, df = {gof.df}, "
                   f"p-value = {'NA' if not np.isfinite(gof.p_value) else format(gof.p_value, '.4g')}")
    out.append("Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1")
    return "\n".join(out)


def selection_text(trace):
    out = [f"elimination threshold: {trace.threshold_value:.6g}",
           f"survivors ({trace.p_elim}): {', '.join(trace.named(trace.survivors))}",
           f"interpretation ({trace.p_interp}): {', '.join(trace.named(trace.interp_set))}",
           f"prediction ({len(trace.pred_set)}): {', '.join(trace.named(trace.pred_set))}"]
    if trace.ave_jump is None:
        out.append("ave_jump: undefined (prediction step fell back to the interpretation set)")
    else:
        out.append(f"ave_jump: {trace.ave_jump:.6g}")
    return "\n".join(out)
