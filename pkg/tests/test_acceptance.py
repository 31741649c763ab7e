"""Acceptance criteria, one test per criterion.

The simulation benchmark runs 10 seeded replicates.  The profile comes
from ``RFZI_ACCEPTANCE``:

* ``full`` (default): nfor=50, ntree=1000, n=200, all four benchmark criteria.
* ``ci``: nfor=10, ntree=300; only the ranking and elimination criteria
  are evaluated, the nested-model criteria are skipped.

Every criterion prints one PASS/FAIL line, repeated in the terminal summary.
"""

import os
import time

import numpy as np
import pytest
from conftest import record

from rfzi.cart import best_split, split_score
from rfzi.dataset import ColumnMeta, Dataset
from rfzi.forest import forest_key, run_forest, variable_importance
from rfzi.simgen import (CORRELATED_PAIRS, TRUE_VARIABLES, SimConfig, generate_selection_sim,
                         generate_zi_counts)
from rfzi.varselect import SelectionConfig, elimination_step, run_procedure
from rfzi.zicount import (ZINB, ZIP, ZISpec, chisq_table, fit_mle, gof_chisq, loglik,
                          loglik_and_grad, moments, pmf)

PROFILE = os.environ.get("RFZI_ACCEPTANCE", "full").lower()
FULL = PROFILE == "full"
N_REPLICATES = 10
BENCH = (SelectionConfig(nfor=50, ntree=1000, ntree_nested=500) if FULL
         else SelectionConfig(nfor=10, ntree=300, ntree_nested=500))
MAX_SECONDS_PER_REPLICATE = 600


def _replicate(seed):
    ds = generate_selection_sim(SimConfig(n=200, seed=seed))
    cfg = SelectionConfig(nfor=BENCH.nfor, ntree=BENCH.ntree, ntree_nested=BENCH.ntree_nested,
                          seed=seed)
    t0 = time.perf_counter()
    if FULL:
        trace = run_procedure(ds, cfg)
        out = {"names": trace.names, "ranked": trace.named(trace.ranked_vars),
               "survivors": trace.named(trace.survivors),
               "interp": trace.named(trace.interp_set), "pred": trace.named(trace.pred_set)}
    else:
        prof = variable_importance(ds.values, ds.response, cfg.importance_forest(), cfg.nfor,
                                   names=ds.names)
        _, survivors, _ = elimination_step(prof)
        out = {"names": ds.names, "ranked": [ds.names[j] for j in prof.ranking],
               "survivors": [ds.names[j] for j in survivors]}
    out["seconds"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def replicates():
    return [_replicate(seed) for seed in range(N_REPLICATES)]


def _tally(results):
    return sum(bool(r) for r in results)


# ---------------------------------------------------------------- benchmark


def test_c1_true_variables_ranked_top_ten(replicates):
    hits = [set(TRUE_VARIABLES) <= set(r["ranked"][:10]) for r in replicates]
    k = _tally(hits)
    assert record("1", f"true variables in top 10 of mean VI ({PROFILE})", k >= 9,
                  f"{k}/{N_REPLICATES} replicates (need >= 9)")


def test_c2_elimination(replicates):
    hits = [set(TRUE_VARIABLES) <= set(r["survivors"]) and 8 <= len(r["survivors"]) <= 25
            for r in replicates]
    k = _tally(hits)
    sizes = [len(r["survivors"]) for r in replicates]
    assert record("2", f"elimination keeps the 8 true variables, 8..25 survivors ({PROFILE})", k >= 9,
                  f"{k}/{N_REPLICATES} replicates (need >= 9); sizes {sizes}")


def test_c3_interpretation(replicates):
    if not FULL:
        record("3", "interpretation set", True, "skipped in the ci profile")
        pytest.skip("nested-model criteria run in the full profile only")
    hits = [set(TRUE_VARIABLES) <= set(r["interp"]) and 8 <= len(r["interp"]) <= 12
            for r in replicates]
    k = _tally(hits)
    sizes = [len(r["interp"]) for r in replicates]
    assert record("3", "interpretation set holds the 8 true variables, size 8..12", k >= 8,
                  f"{k}/{N_REPLICATES} replicates (need >= 8); sizes {sizes}")


def test_c4_prediction(replicates):
    if not FULL:
        record("4", "prediction set", True, "skipped in the ci profile")
        pytest.skip("nested-model criteria run in the full profile only")

    def ok(pred):
        return 4 <= len(pred) <= 9 and all(any(v in pred for v in pair) for pair in CORRELATED_PAIRS)

    hits = [ok(r["pred"]) for r in replicates]
    k = _tally(hits)
    sets = ["{" + ",".join(r["pred"]) + "}" for r in replicates]
    assert record("4", "prediction set of 4..9 covering every correlated pair", k >= 8,
                  f"{k}/{N_REPLICATES} replicates (need >= 8); sets {' '.join(sets)}")


def test_c4b_runtime(replicates):
    worst = max(r["seconds"] for r in replicates)
    assert record("4b", f"runtime per replicate ({PROFILE})", worst <= MAX_SECONDS_PER_REPLICATE,
                  f"max {worst:.1f} s (limit {MAX_SECONDS_PER_REPLICATE} s)")


# ---------------------------------------------------------------- likelihood


def _counts(family, seed, n_groups=100, per=50, beta=None, gamma=None, theta=None):
    gen = np.random.default_rng(seed)
    x = gen.uniform(1.0, 7.0, n_groups)
    return generate_zi_counts(family, beta, gamma, x, x, per, theta=theta, seed=seed + 1000,
                              x_names=["log_gameto"], z_names=["log_gameto"])


def test_c5_gradient_check():
    worst = 0.0
    gen = np.random.default_rng(5)
    for family in (ZIP, ZINB):
        data = _counts(family, 5, 40, 10, (-1.3, 0.84), (0.0, -0.26), 0.57 if family == ZINB else None)
        spec = ZISpec(family, ["log_gameto"], ["log_gameto"])
        for _ in range(20):
            v = gen.normal(0, 0.4, spec.n_params)
            _, g = loglik_and_grad(spec, v, data)
            fd = np.empty_like(v)
            for j in range(v.size):
                h = 1e-6 * max(1.0, abs(v[j]))
                e = np.zeros_like(v)
                e[j] = h
                fd[j] = (loglik(spec, v + e, data) - loglik(spec, v - e, data)) / (2 * h)
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    assert record("5", "analytic gradient vs central differences (ZIP, ZINB; 20 points each)",
                  worst < 1e-5, f"max relative error {worst:.2e} (limit 1e-5)")


RECOVERY_TRUTH = {
    ZIP: dict(beta=(-1.3, 0.84), gamma=(0.0, -0.26), theta=None),
    ZINB: dict(beta=(-1.3021, 0.8402), gamma=(0.0029, -0.2618), theta=float(np.exp(-0.5693))),
}


def test_c6_parameter_recovery():
    inside = total = 0
    for family, truth in RECOVERY_TRUTH.items():
        vec = np.r_[truth["beta"], truth["gamma"]]
        if truth["theta"] is not None:
            vec = np.r_[vec, np.log(truth["theta"])]
        for rep in range(20):
            data = _counts(family, 100 + rep, **truth)
            assert data.n_obs == 5000
            fit = fit_mle(ZISpec(family, ["log_gameto"], ["log_gameto"]), data)
            inside += int(np.sum(np.abs(fit.vector - vec) <= 3 * fit.se))
            total += vec.size
    frac = inside / total
    assert record("6", "parameter recovery within 3 SE (n=5000, 20 replicates per family)",
                  frac >= 0.95, f"{inside}/{total} coordinates = {frac:.3f} (need >= 0.95)")


def test_c7_intercept_only_grid_oracle():
    data = generate_zi_counts(ZIP, [np.log(3.1)], [-0.4], np.zeros((1, 0)), np.zeros((1, 0)), 4000,
                              seed=77)
    y = data.counts
    n0, npos, s = np.sum(y == 0), np.sum(y > 0), float(y.sum())

    def ll(lam, pi):
        return (n0 * np.log(pi + (1 - pi) * np.exp(-lam)) + npos * np.log1p(-pi)
                + s * np.log(lam) - npos * lam)

    lam_g, pi_g = np.meshgrid(np.arange(0.5, 8.0, 0.005), np.arange(0.001, 0.95, 0.001), indexing="ij")
    i, j = np.unravel_index(np.argmax(ll(lam_g, pi_g)), lam_g.shape)
    lam_f, pi_f = np.meshgrid(lam_g[i, 0] + np.arange(-0.01, 0.01, 2e-5),
                              pi_g[0, j] + np.arange(-0.002, 0.002, 2e-5), indexing="ij")
    i, j = np.unravel_index(np.argmax(ll(lam_f, pi_f)), lam_f.shape)
    fit = fit_mle(ZISpec(ZIP), data)
    lam_hat = float(np.exp(fit.params.beta[0]))
    pi_hat = float(1 / (1 + np.exp(-fit.params.gamma[0])))
    ok = round(lam_hat, 3) == round(lam_f[i, 0], 3) and round(pi_hat, 3) == round(pi_f[0, j], 3)
    assert record("7", "intercept-only ZIP MLE vs 2-D grid search (3 decimals)", ok,
                  f"MLE ({lam_hat:.5f}, {pi_hat:.5f}) grid ({lam_f[i, 0]:.5f}, {pi_f[0, j]:.5f})")


def test_c8_densities():
    ys = np.arange(0, 10_001)
    cases = [(ZIP, 3.0, 0.2, None), (ZIP, 25.0, 0.6, None), (ZINB, 7.0, 0.4, 0.6),
             (ZINB, 40.0, 0.05, 3.0), (ZINB, 2.0, 0.9, 20.0)]
    worst_norm = worst_mom = 0.0
    for fam, lam, pi, th in cases:
        p = pmf(fam, ys, lam, pi, th)
        worst_norm = max(worst_norm, 1 - p.sum())
        mean = np.sum(ys * p)
        var = np.sum((ys - mean) ** 2 * p)
        m, v = moments(fam, lam, pi, th)
        worst_mom = max(worst_mom, abs(m / mean - 1), abs(v / var - 1))
    sup = np.max(np.abs(pmf(ZINB, ys[:51], 6.0, 0.25, 1e6) - pmf(ZIP, ys[:51], 6.0, 0.25)))
    ok = worst_norm <= 1e-8 and worst_mom < 1e-6 and sup < 1e-4
    assert record("8", "pmf normalization, moments vs summation, ZINB(theta=1e6) vs ZIP", ok,
                  f"1-sum {worst_norm:.1e} (<= 1e-8), moment rel err {worst_mom:.1e} (< 1e-6), "
                  f"sup diff {sup:.1e} (< 1e-4)")


def test_c9_goodness_of_fit():
    stat0, _, p0 = chisq_table([12, 30, 25, 9, 6], [12, 30, 25, 9, 6], 2)
    obs, exp = [10, 20, 30, 25, 15], [12, 18, 33, 22, 15]
    stat5, df5, _ = chisq_table(obs, exp, 2)
    hand = 4 / 12 + 4 / 18 + 9 / 33 + 9 / 22 + 0 / 15
    wins = 0
    for rep in range(20):
        data = _counts(ZINB, 300 + rep, 60, 25, (-1.3021, 0.8402), (0.0029, -0.2618), 0.57)
        spec_args = (["log_gameto"], ["log_gameto"])
        z = gof_chisq(fit_mle(ZISpec(ZIP, *spec_args), data), data)
        nb = gof_chisq(fit_mle(ZISpec(ZINB, *spec_args), data), data)
        wins += z.statistic > nb.statistic
    ok = stat0 == 0 and p0 == 1 and stat5 == pytest.approx(hand, rel=1e-12) and df5 == 2 and wins >= 19
    assert record("9", "GOF: perfect table, hand 5-bin table, ZIP worse than ZINB on over-dispersed data",
                  ok, f"perfect stat {stat0}, p {p0}; 5-bin {stat5:.6f} vs hand {hand:.6f}; "
                      f"ZIP worse in {wins}/20 (need >= 19)")


# ---------------------------------------------------------------- forest engine


def test_c10_zero_importance_and_thread_determinism():
    ds = generate_selection_sim(SimConfig(seed=21))
    X = np.column_stack([ds.values, np.ones(ds.n_rows)])
    vi = run_forest(X, ds.response, 200, 17, 5, forest_key(21), with_vi=True).importance
    ds_c = Dataset(ds.columns + [ColumnMeta("const")], X, ds.response)
    cfg = SelectionConfig(nfor=4, ntree=100, ntree_nested=100, seed=21)
    traces = {t: run_procedure(ds_c, cfg, threads=t).to_json() for t in (1, 2, 8)}
    same = traces[1] == traces[2] == traces[8]
    ok = vi[-1] == 0.0 and same
    assert record("10", "never-split variable has VI exactly 0; traces identical on 1, 2, 8 threads", ok,
                  f"VI of constant column {float(vi[-1])!r}; identical traces {same}")


def test_c11_noise_oob_error():
    ratios = []
    for rep in range(10):
        gen = np.random.default_rng(500 + rep)
        X = gen.standard_normal((500, 10))
        y = 1.7 * gen.standard_normal(500)
        err = run_forest(X, y, 500, 3, 5, forest_key(rep)).oob_error
        ratios.append(err / y.var())
    worst = max(abs(r - 1) for r in ratios)
    assert record("11", "OOB error on pure noise vs response variance (n=500, 10 replicates)",
                  worst <= 0.15, f"max |ratio - 1| = {worst:.3f} (limit 0.15)")


def test_c12_best_split_oracle():
    gen = np.random.default_rng(12)
    agree = 0
    for _ in range(100):
        X = gen.standard_normal((12, 5))
        X[:, 3] = gen.integers(0, 3, 12)
        y = gen.standard_normal(12)
        cands = sorted(gen.choice(5, gen.integers(1, 6), replace=False))
        rule = best_split(X, y, np.arange(12), cands)
        best = None
        for j in cands:
            vals = np.unique(X[:, j])
            for a, b in zip(vals[:-1], vals[1:]):
                thr = 0.5 * (a + b)
                sc = split_score(y, X[:, j] <= thr)
                if best is None or sc < best[0] - 1e-12:
                    best = (sc, j, thr)
        if best is None or rule is None:
            agree += best is None and rule is None
        else:
            agree += (rule.variable, rule.threshold) == best[1:]
    assert record("12", "best_split vs exhaustive enumeration on 12-row nodes", agree == 100,
                  f"{agree}/100 agree")


# ---------------------------------------------------------------- simgen


def test_c13_simulated_correlations():
    ds = generate_selection_sim(SimConfig(n=100_000, seed=13))
    r = {f"{a}-{b}": float(np.corrcoef(ds.column(a), ds.column(b))[0, 1]) for a, b in CORRELATED_PAIRS}
    worst = max(abs(v - 0.9) for v in r.values())
    detail = ", ".join(f"{k} {v:.4f}" for k, v in r.items())
    assert record("13", "pair correlations 0.9 +- 0.02 at n=1e5", worst <= 0.02, detail)
