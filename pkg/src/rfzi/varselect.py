"""Three-step variable selection driven by random-forest importance.

1. Elimination: rank variables by mean importance, fit a regression tree
   to the importance standard deviations in rank order and keep the
   variables whose mean importance exceeds the tree's smallest fitted
   value.
2. Interpretation: nested forests on the top-k survivors; keep the prefix
   with the smallest mean OOB error.
3. Prediction: walk the interpretation set in rank order and add a
   variable only when it lowers the OOB error by more than ``ave_jump``,
   twice the mean absolute OOB-error increment over the nested models
   beyond the interpretation set.

Forward and exhaustive searches are provided as slower cross-checks.
"""

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .cart import fit_1d_cart
from .forest import ForestConfig, mean_oob_error, variable_importance

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class SelectionError(RuntimeError):
    """The procedure cannot continue (e.g. nothing survives elimination)."""


@dataclass(frozen=True)
class SelectionConfig:
    nfor: int = 50
    ntree: int = 500  # importance forests
    ntree_nested: int = 500  # every OOB-error model
    mtry: int | None = None  # importance forests only; nested models use max(1, k // 3)
    min_node_size: int = 5
    seed: int = 0
    exhaustive_cap: int = 15

    def __post_init__(self):
        if self.nfor < 1:
            raise ValueError("nfor must be >= 1")

    def importance_forest(self):
        return ForestConfig(self.ntree, self.mtry, self.min_node_size, self.seed)

    def nested_forest(self):
        return ForestConfig(self.ntree_nested, None, self.min_node_size, self.seed)


@dataclass
class SelectionTrace:
    names: list
    vi_mean: list
    vi_sd: list
    ranked_vars: list  # column indices by decreasing vi_mean
    threshold_value: float
    threshold_curve: list  # tree fit of vi_sd in rank order
    survivors: list
    nested_oob: list
    nested_oob_sd: list
    interp_set: list
    pred_set: list
    ave_jump: float | None
    prediction_steps: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def p_elim(self):
        return len(self.survivors)

    @property
    def p_interp(self):
        return len(self.interp_set)

    def named(self, idx):
        return [self.names[j] for j in idx]

    def to_dict(self):
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["survivor_names"] = self.named(self.survivors)
        d["interp_names"] = self.named(self.interp_set)
        d["pred_names"] = self.named(self.pred_set)
        return d

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        keys = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in keys})


def elimination_step(profile):
    """Return ``(threshold, survivors, fitted_curve)`` from an importance profile.

    Survivors are column indices in rank order whose mean importance is
    strictly above the threshold.
    """
    if profile.vi_mean.size == 0:
        raise ValueError("empty importance profile")
    ranked = profile.ranking
    ranks = np.arange(1, ranked.size + 1, dtype=float)
    tree = fit_1d_cart(ranks, profile.vi_sd[ranked])
    curve = tree.predict(ranks[:, None])
    threshold = float(curve.min())
    survivors = [int(j) for j in ranked if profile.vi_mean[j] > threshold]
    return threshold, survivors, curve


def nested_errors(X, y, order, config, nfor, threads=None, tag=rng.TAG_NESTED):
    """Mean/sd OOB error of the forests on ``order[:k]`` for k = 1..len(order)."""
    fc = config if isinstance(config, ForestConfig) else config.nested_forest()
    means, sds = [], []
    for k in range(1, len(order) + 1):
        m, s = mean_oob_error(X, y, order[:k], fc, nfor, (tag, k), threads)
        means.append(m)
        sds.append(s)
    return means, sds


def interpretation_step(X, y, survivors, config, nfor, threads=None):
    """Return ``(interp_set, nested_oob, nested_sd)``."""
    if not survivors:
        raise SelectionError("no variables to interpret")
    means, sds = nested_errors(X, y, survivors, config, nfor, threads)
    k = int(np.argmin(means)) + 1
    return list(survivors[:k]), means, sds


def mean_jump(nested_oob, p_interp):
    """Twice the mean |errOOB(j+1) - errOOB(j)| for j = p_interp .. p_elim - 1.

    None when the interpretation set already holds every survivor.
    """
    tail = np.asarray(nested_oob[p_interp - 1:], dtype=float)
    if tail.size < 2:
        return None
    return float(2.0 * np.mean(np.abs(np.diff(tail))))


def gate(interp_set, start_error, ave_jump, evaluate):
    """Sequential introduction over ``interp_set``.

    ``evaluate(columns, i)`` returns the error of the model on ``columns``
    for the i-th candidate.  A candidate joins when it lowers the current
    error by more than ``ave_jump``.
    """
    current = [interp_set[0]]
    err = float(start_error)
    steps = [{"variable": interp_set[0], "oob_error": err, "admitted": True}]
    for i, var in enumerate(interp_set[1:], start=1):
        trial = float(evaluate(current + [var], i))
        admitted = err - trial > ave_jump
        steps.append({"variable": var, "oob_error": trial, "admitted": bool(admitted)})
        if admitted:
            current.append(var)
            err = trial
    return current, steps


def prediction_step(X, y, interp_set, nested_oob, config, nfor, threads=None, ave_jump=None):
    """Return ``(pred_set, ave_jump, steps)``.

    ``ave_jump`` may be injected; otherwise it is computed from
    ``nested_oob``.  ``steps`` records, per candidate, its error and
    whether it was admitted.
    """
    interp_set = list(interp_set)
    if not interp_set:
        raise SelectionError("empty interpretation set")
    if ave_jump is None:
        ave_jump = mean_jump(nested_oob, len(interp_set))
    if ave_jump is None:
        log.warning("interpretation set equals the surviving set; prediction step skipped")
        return interp_set, None, []
    fc = config if isinstance(config, ForestConfig) else config.nested_forest()

    def evaluate(cols, i):
        return mean_oob_error(X, y, cols, fc, nfor, (rng.TAG_PREDICTION, i), threads)[0]

    # the one-variable model is the first nested model
    pred_set, steps = gate(interp_set, nested_oob[0], ave_jump, evaluate)
    return pred_set, ave_jump, steps


def forward_selection(X, y, survivors, config, nfor, threads=None):
    """Greedy forward search; returns ``(selected, path, path_errors)``.

    At each round the variable whose addition gives the smallest mean OOB
    error joins; the selected set is the prefix of the path with the
    smallest error.
    """
    survivors = list(survivors)
    if not survivors:
        raise SelectionError("forward selection needs at least one candidate")
    fc = config if isinstance(config, ForestConfig) else config.nested_forest()
    width = X.shape[1]
    path, errors, remaining = [], [], survivors[:]
    for rnd in range(len(survivors)):
        best = None
        for var in remaining:
            e, _ = mean_oob_error(X, y, path + [var], fc, nfor,
                                  (rng.TAG_FORWARD, rnd * width + var), threads)
            if best is None or e < best[0]:
                best = (e, var)
        path.append(best[1])
        errors.append(best[0])
        remaining.remove(best[1])
    k = int(np.argmin(errors)) + 1
    return path[:k], path, errors


def best_subset(candidates, evaluate):
    """Smallest-error nonempty subset; ties go to the smaller, then lexicographically first.

    ``evaluate(subset, mask)`` gets the subset as a sorted list and its
    bitmask over ``candidates``.
    """
    candidates = sorted(set(int(c) for c in candidates))
    best, n = None, 0
    for size in range(1, len(candidates) + 1):
        for subset in itertools.combinations(candidates, size):
            mask = sum(1 << candidates.index(v) for v in subset)
            e = float(evaluate(list(subset), mask))
            n += 1
            # strict: earlier (smaller, then lexicographically first) subsets win ties
            if best is None or e < best[1]:
                best = (list(subset), e)
    return best[0], best[1], n


def exhaustive_search(X, y, candidates, config, nfor, cap=15, threads=None):
    """Best nonempty subset of ``candidates`` by mean OOB error.

    Returns ``(best_subset, best_error, n_evaluated)``; see :func:`best_subset`
    for the tie rule.
    """
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise SelectionError("exhaustive search needs at least one candidate")
    if len(candidates) > cap:
        raise SelectionError(f"{len(candidates)} candidates exceed the exhaustive cap of {cap}")
    fc = config if isinstance(config, ForestConfig) else config.nested_forest()

    def evaluate(subset, mask):
        return mean_oob_error(X, y, subset, fc, nfor, (rng.TAG_EXHAUSTIVE, mask), threads)[0]

    return best_subset(candidates, evaluate)


def run_procedure(dataset, config=SelectionConfig(), threads=None, profile=None):
    """Elimination, interpretation and prediction on ``dataset``."""
    if dataset.response is None:
        raise SelectionError("dataset has no response")
    X = np.ascontiguousarray(dataset.values)
    y = np.ascontiguousarray(dataset.response)
    if profile is None:
        profile = variable_importance(X, y, config.importance_forest(), config.nfor,
                                      names=dataset.names, threads=threads)
    threshold, survivors, curve = elimination_step(profile)
    if not survivors:
        raise SelectionError("no variable has mean importance above the elimination threshold")
    interp_set, nested, nested_sd = interpretation_step(X, y, survivors, config, config.nfor, threads)
    pred_set, jump, steps = prediction_step(X, y, interp_set, nested, config, config.nfor, threads)
    return SelectionTrace(
        names=list(dataset.names),
        vi_mean=profile.vi_mean.tolist(), vi_sd=profile.vi_sd.tolist(),
        ranked_vars=[int(j) for j in profile.ranking],
        threshold_value=threshold, threshold_curve=[float(c) for c in curve],
        survivors=survivors, nested_oob=nested, nested_oob_sd=nested_sd,
        interp_set=interp_set, pred_set=pred_set, ave_jump=jump,
        prediction_steps=steps, config=asdict(config))
