"""SVG figures for selection traces and zero-inflated fits.

Every figure is written with a fixed hash salt and no date stamp so
reruns produce identical bytes.  Each ``name.svg`` gets a sibling
``name.points.json`` holding the plotted coordinates at full precision.
"""

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SVG_RC = {"svg.hashsalt": "rfzi", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path, series):
    path = str(path)
    with plt.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    side = path[:-4] + ".points.json" if path.endswith(".svg") else path + ".points.json"
    with open(side, "w") as fh:
        json.dump(series, fh, indent=1, sort_keys=True)
    return path, side


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def selection_figure(trace, path):
    """Four panels: VI mean, VI sd with the threshold tree, nested and prediction errors."""
    names = trace.names
    ranked = trace.ranked_vars
    ranks = np.arange(1, len(ranked) + 1)
    vi_mean = np.asarray(trace.vi_mean)[ranked]
    vi_sd = np.asarray(trace.vi_sd)[ranked]
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(2, 2, figsize=(10, 8))
    a = ax[0, 0]
    a.plot(ranks, vi_mean, "o", ms=3, color="k")
    a.axhline(trace.threshold_value, color="tab:red", lw=1, ls="--")
    a.set_xlabel("variable rank")
    a.set_ylabel("mean VI")
    a.set_title("importance")

    a = ax[0, 1]
    a.plot(ranks, vi_sd, "o", ms=3, color="k")
    a.step(ranks, trace.threshold_curve, where="mid", color="tab:green", lw=1)
    a.axhline(trace.threshold_value, color="tab:red", lw=1, ls="--")
    a.set_xlabel("variable rank")
    a.set_ylabel("VI standard deviation")
    a.set_title("elimination threshold")

    k = np.arange(1, len(trace.nested_oob) + 1)
    a = ax[1, 0]
    a.errorbar(k, trace.nested_oob, yerr=trace.nested_oob_sd, fmt="o-", ms=3, color="k", lw=1)
    a.axvline(trace.p_interp, color="tab:blue", lw=1, ls=":")
    a.set_xlabel("nested model size")
    a.set_ylabel("OOB error")
    a.set_title("interpretation")

    steps = trace.prediction_steps
    admitted = [s for s in steps if s["admitted"]]
    a = ax[1, 1]
    if admitted:
        a.plot(range(1, len(admitted) + 1), [s["oob_error"] for s in admitted], "o-", ms=3, color="k")
        a.set_xticks(range(1, len(admitted) + 1))
        a.set_xticklabels([names[s["variable"]] for s in admitted], rotation=45, fontsize=7)
    else:
        a.text(0.5, 0.5, "prediction step skipped", ha="center", transform=a.transAxes)
    a.set_ylabel("OOB error")
    a.set_title("prediction")
    fig.tight_layout()
    series = {
        "importance": {"x": _floats(ranks), "y": _floats(vi_mean)},
        "importance_sd": {"x": _floats(ranks), "y": _floats(vi_sd),
                          "fit": _floats(trace.threshold_curve)},
        "threshold": float(trace.threshold_value),
        "nested_oob": {"x": _floats(k), "y": _floats(trace.nested_oob),
                       "sd": _floats(trace.nested_oob_sd)},
        "prediction": {"variables": [names[s["variable"]] for s in admitted],
                       "y": [float(s["oob_error"]) for s in admitted]},
    }
    return _save(fig, path, series)


def path_figure(labels, errors, path, title="forward selection"):
    """OOB error along a forward or other ordered search path."""
    x = np.arange(1, len(errors) + 1)
    with plt.rc_context(SVG_RC):
        fig, a = plt.subplots(figsize=(6, 4))
    a.plot(x, errors, "o-", ms=3, color="k")
    a.set_xticks(x)
    a.set_xticklabels(labels, rotation=45, fontsize=7)
    a.set_ylabel("OOB error")
    a.set_title(title)
    fig.tight_layout()
    return _save(fig, path, {"labels": list(labels), "x": _floats(x), "y": _floats(errors)})


def frequency_figure(observed, expected_by_model, path, max_count=None):
    """Observed count frequencies (bars) against each model's expected frequencies."""
    observed = np.asarray(observed, dtype=float)
    top = observed.size if max_count is None else min(observed.size, max_count + 1)
    x = np.arange(top)
    with plt.rc_context(SVG_RC):
        fig, a = plt.subplots(figsize=(7, 4))
    a.bar(x, observed[:top], color="0.8", label="observed")
    series = {"count": _floats(x), "observed": _floats(observed[:top])}
    for (label, exp), mark in zip(sorted(expected_by_model.items()), ("o-", "s--", "^:")):
        exp = np.asarray(exp, dtype=float)[:top]
        a.plot(x[:exp.size], exp, mark, ms=3, lw=1, label=label)
        series[label] = _floats(exp)
    a.set_xlabel("count")
    a.set_ylabel("frequency")
    a.legend()
    fig.tight_layout()
    return _save(fig, path, series)


def mean_figure(covariate, observed_mean, fitted_by_model, path, xlabel="covariate"):
    """Per-group observed mean count and fitted mean against one covariate."""
    covariate = np.asarray(covariate, dtype=float)
    order = np.argsort(covariate, kind="stable")
    with plt.rc_context(SVG_RC):
        fig, a = plt.subplots(figsize=(6, 4))
    a.plot(covariate[order], np.asarray(observed_mean)[order], "o", ms=3, color="k", label="observed")
    series = {"x": _floats(covariate[order]), "observed": _floats(np.asarray(observed_mean)[order])}
    for label, mu in sorted(fitted_by_model.items()):
        mu = np.asarray(mu, dtype=float)[order]
        a.plot(covariate[order], mu, "-", lw=1, label=label)
        series[label] = _floats(mu)
    a.set_xlabel(xlabel)
    a.set_ylabel("mean count")
    a.legend()
    fig.tight_layout()
    return _save(fig, path, series)
