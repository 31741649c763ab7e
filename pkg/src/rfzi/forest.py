"""Random forest regression: bagging, OOB error and permutation importance.

Tree ``t`` of a forest with key ``K`` bootstraps with stream
``derive_key(K, t, TAG_BOOTSTRAP)``, draws its node variable subsets from
``derive_key(K, t, TAG_SPLIT)`` and permutes variable ``j`` for importance
with ``derive_key(K, t, TAG_PERMUTE, j)``.  Forest keys are themselves
derived from ``(seed, purpose, indices)``, so every result is a function
of the seed alone, whatever the number of worker threads.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import rng
from .cart import Tree, _as_xy, _grow_tree, _predict_row, _predict_row_override, \
    default_mtry, presort

log = logging.getLogger(__name__)

THREADS_ENV = "RFZI_THREADS"


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ForestConfig:
    ntree: int = 500
    mtry: int | None = None  # None -> max(1, p // 3)
    min_node_size: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.ntree < 1:
            raise ValueError("ntree must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")

    def resolve_mtry(self, p):
        mtry = default_mtry(p) if self.mtry is None else self.mtry
        if mtry > p:
            raise ValueError(f"mtry={mtry} exceeds the {p} available variables")
        return mtry


@nb.njit(nogil=True, cache=True)
def _bootstrap(key, n, inbag):
    inbag[:] = 0
    for k in range(n):
        inbag[rng.draw_index(key, k, n)] += 1


@nb.njit(nogil=True, cache=True)
def _forest_oob(X, y, ntree, mtry, min_node, forest_key, with_vi):
    """Grow ``ntree`` trees without storing them.

    Returns per-row OOB prediction sums and counts, the per-variable sum
    over trees of the permutation error increase, and the number of trees
    that contributed to that sum.
    """
    n, p = X.shape
    size = 2 * n
    feat = np.empty(size, np.int64)
    thr = np.empty(size)
    left = np.empty(size, np.int64)
    right = np.empty(size, np.int64)
    value = np.empty(size)
    nsamp = np.empty(size, np.int64)
    XT = np.ascontiguousarray(X.T)
    order = presort(X)
    S = np.empty((p, n), np.int64)
    buf = np.empty(n, np.int64)
    goleft = np.zeros(n, np.int64)
    inbag = np.empty(n, np.int64)
    oob = np.empty(n, np.int64)
    pred = np.empty(n)
    perm = np.empty(n, np.int64)
    used = np.empty(p, np.bool_)
    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n, np.int64)
    vi_sum = np.zeros(p)
    n_vi = 0
    for t in range(ntree):
        _bootstrap(rng.derive_key(forest_key, t, rng.TAG_BOOTSTRAP), n, inbag)
        k = _grow_tree(XT, y, order, inbag, mtry, min_node,
                       rng.derive_key(forest_key, t, rng.TAG_SPLIT),
                       feat, thr, left, right, value, nsamp, S, buf, goleft)
        n_oob = 0
        for i in range(n):
            if inbag[i] == 0:
                oob[n_oob] = i
                n_oob += 1
        base = 0.0
        for a in range(n_oob):
            i = oob[a]
            pr = _predict_row(feat, thr, left, right, value, X, i)
            pred[a] = pr
            oob_sum[i] += pr
            oob_cnt[i] += 1
            base += (y[i] - pr) ** 2
        if not with_vi or n_oob == 0:
            continue
        base /= n_oob
        used[:] = False
        for node in range(k):
            if feat[node] >= 0:
                used[feat[node]] = True
        for j in range(p):
            if not used[j]:
                continue  # permuting j cannot change any prediction
            pkey = rng.derive_key(forest_key, t, rng.TAG_PERMUTE, j)
            for a in range(n_oob):
                perm[a] = a
            for a in range(n_oob - 1, 0, -1):
                b = rng.draw_index(pkey, a, a + 1)
                tmp = perm[a]
                perm[a] = perm[b]
                perm[b] = tmp
            err = 0.0
            for a in range(n_oob):
                i = oob[a]
                pr = _predict_row_override(feat, thr, left, right, value, X, i,
                                           j, X[oob[perm[a]], j])
                err += (y[i] - pr) ** 2
            vi_sum[j] += err / n_oob - base
        n_vi += 1
    return oob_sum, oob_cnt, vi_sum, n_vi


@nb.njit(nogil=True, cache=True)
def _forest_store(X, y, ntree, mtry, min_node, forest_key,
                  feat, thr, left, right, value, nsamp, inbag, n_nodes):
    n, p = X.shape
    XT = np.ascontiguousarray(X.T)
    order = presort(X)
    S = np.empty((p, n), np.int64)
    buf = np.empty(n, np.int64)
    goleft = np.zeros(n, np.int64)
    for t in range(ntree):
        _bootstrap(rng.derive_key(forest_key, t, rng.TAG_BOOTSTRAP), n, inbag[t])
        n_nodes[t] = _grow_tree(XT, y, order, inbag[t], mtry, min_node,
                                rng.derive_key(forest_key, t, rng.TAG_SPLIT),
                                feat[t], thr[t], left[t], right[t], value[t], nsamp[t],
                                S, buf, goleft)


def _mse_from_oob(y, oob_sum, oob_cnt):
    seen = oob_cnt > 0
    if not np.any(seen):
        raise ValueError("every row is in-bag for every tree; increase ntree")
    missing = int(np.sum(~seen))
    if missing:
        log.warning("%d rows were never out of bag and are excluded from the OOB error", missing)
    resid = y[seen] - oob_sum[seen] / oob_cnt[seen]
    return float(np.mean(resid ** 2))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: list
    bootstrap_counts: np.ndarray  # (ntree, n) in-bag multiplicities
    config: ForestConfig
    key: int

    @property
    def oob_mask(self):
        return self.bootstrap_counts == 0

    def predict_matrix(self, X):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        return np.stack([tree.predict(X) for tree in self.trees])

    def predict(self, X):
        return self.predict_matrix(X).mean(axis=0)


def forest_key(seed, tag=rng.TAG_FOREST, i=0, j=0):
    return rng.stream_key(seed, tag, i, j)


def fit_forest(X, y, config=ForestConfig(), key=None):
    """Fit and keep every tree.  ``key`` overrides the seed-derived stream."""
    X, y = _as_xy(X, y)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    mtry = config.resolve_mtry(p)
    key = forest_key(config.seed) if key is None else key
    T, size = config.ntree, 2 * n
    feat = np.empty((T, size), np.int64)
    thr = np.empty((T, size))
    left = np.empty((T, size), np.int64)
    right = np.empty((T, size), np.int64)
    value = np.empty((T, size))
    nsamp = np.empty((T, size), np.int64)
    inbag = np.empty((T, n), np.int64)
    n_nodes = np.empty(T, np.int64)
    _forest_store(X, y, T, mtry, config.min_node_size, np.uint64(key),
                  feat, thr, left, right, value, nsamp, inbag, n_nodes)
    trees = [Tree(feat[t, :k].copy(), thr[t, :k].copy(), left[t, :k].copy(),
                  right[t, :k].copy(), value[t, :k].copy(), nsamp[t, :k].copy(),
                  config.min_node_size)
             for t, k in enumerate(n_nodes)]
    return Forest(trees, inbag, config, key)


def predict_forest(forest, X):
    return forest.predict(X)


def oob_error(forest, X, y):
    """Mean squared error of OOB-aggregated predictions."""
    X, y = _as_xy(X, y)
    preds = forest.predict_matrix(X)
    mask = forest.oob_mask
    return _mse_from_oob(y, np.where(mask, preds, 0.0).sum(axis=0), mask.sum(axis=0))


@dataclass(frozen=True)
class ForestRun:
    """OOB error and (optionally) raw importances of one unstored forest."""

    oob_error: float
    importance: np.ndarray | None


def run_forest(X, y, ntree, mtry, min_node_size, key, with_vi=False):
    X, y = _as_xy(X, y)
    oob_sum, oob_cnt, vi_sum, n_vi = _forest_oob(X, y, int(ntree), int(mtry),
                                                 int(min_node_size), np.uint64(key),
                                                 bool(with_vi))
    vi = None
    if with_vi:
        vi = vi_sum / n_vi if n_vi else np.zeros(X.shape[1])
    return ForestRun(_mse_from_oob(y, oob_sum, oob_cnt), vi)


def map_ordered(fn, items, threads=None):
    """``[fn(x) for x in items]`` on a thread pool; output order is input order."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class ImportanceProfile:
    vi_mean: np.ndarray
    vi_sd: np.ndarray
    names: list = field(default_factory=list)
    per_forest: np.ndarray | None = None  # (nfor, p)
    oob_errors: np.ndarray | None = None  # (nfor,)

    def __post_init__(self):
        if not self.names:
            object.__setattr__(self, "names", [f"x{j}" for j in range(self.vi_mean.size)])

    @property
    def ranking(self):
        """Variable indices by decreasing mean importance (stable)."""
        return np.argsort(-self.vi_mean, kind="stable")

    def rows(self):
        rank = np.empty(self.vi_mean.size, int)
        rank[self.ranking] = np.arange(1, self.vi_mean.size + 1)
        return [(self.names[j], float(self.vi_mean[j]), float(self.vi_sd[j]), int(rank[j]))
                for j in self.ranking]


def variable_importance(X, y, config=ForestConfig(), nfor=50, names=None, threads=None,
                        tag=rng.TAG_IMPORTANCE):
    """Permutation importance averaged over trees, summarized over ``nfor`` forests.

    ``vi_sd`` is the standard deviation across forests (ddof=1; 0 when
    ``nfor == 1``).
    """
    if nfor < 1:
        raise ValueError("nfor must be >= 1")
    X, y = _as_xy(X, y)
    mtry = config.resolve_mtry(X.shape[1])

    def one(f):
        return run_forest(X, y, config.ntree, mtry, config.min_node_size,
                          forest_key(config.seed, tag, f), with_vi=True)

    runs = map_ordered(one, range(nfor), threads)
    vi = np.stack([r.importance for r in runs])
    sd = vi.std(axis=0, ddof=1) if nfor > 1 else np.zeros(vi.shape[1])
    return ImportanceProfile(vi.mean(axis=0), sd, list(names or []), vi,
                             np.array([r.oob_error for r in runs]))


def mean_oob_error(X, y, columns, config, nfor, seed_path, threads=None):
    """Mean and sd of OOB error over ``nfor`` forests on ``columns`` of ``X``.

    ``seed_path`` is a ``(tag, index)`` pair naming the model so that its
    forests get streams of their own.  mtry follows the default rule for
    the number of columns used.
    """
    cols = np.asarray(columns, dtype=np.int64)
    Xs = np.ascontiguousarray(X[:, cols])
    mtry = default_mtry(cols.size) if config.mtry is None else min(config.mtry, cols.size)
    tag, index = seed_path

    def one(f):
        return run_forest(Xs, y, config.ntree, mtry, config.min_node_size,
                          forest_key(config.seed, tag, index, f)).oob_error

    errs = np.array(map_ordered(one, range(nfor), threads))
    return float(errs.mean()), float(errs.std(ddof=1)) if nfor > 1 else 0.0
