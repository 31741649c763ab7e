"""Fully grown binary regression trees.

Splits minimize the size-weighted sum of child response variances; a node
is split only while it holds at least ``min_node_size`` observations
(bootstrap duplicates count) and its responses are not all equal.  Rows
with ``x <= threshold`` go left.

The growing and prediction kernels are numba functions working on flat
node arrays so the forest module can call them without Python overhead.
Ties in split quality go to the lowest variable index, then the lowest
threshold.
"""

import json
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import rng

LEAF = -1
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SplitRule:
    variable: int
    threshold: float


@nb.njit(nogil=True, cache=True)
def presort(X):
    """Row indices sorting each column of ``X`` (stable), shape ``(p, n)``."""
    n, p = X.shape
    out = np.empty((p, n), np.int64)
    for j in range(p):
        out[j] = np.argsort(X[:, j], kind="mergesort")
    return out


@nb.njit(nogil=True, cache=True)
def _fill_sorted(order, counts, S):
    """Expand the row multiset ``counts`` into per-variable sorted row lists."""
    p, n = order.shape
    for j in range(p):
        pos = 0
        for k in range(n):
            r = order[j, k]
            for _ in range(counts[r]):
                S[j, pos] = r
                pos += 1
    return pos


@nb.njit(nogil=True, cache=True)
def _scan_split(XT, y, S, start, end, cands, ncand):
    """Best (variable, threshold, sse_reduction) over ``cands[:ncand]``.

    ``XT`` is the transposed design and ``S[j, start:end]`` lists the
    node's rows sorted by variable ``j``.
    ``cands`` must be sorted ascending.  Returns variable -1 when every
    candidate is constant on the node.
    """
    m = end - start
    mean = 0.0
    for k in range(start, end):
        mean += y[S[0, k]]
    mean /= m
    # maximize sl^2 / (nl * nr); cross-multiplied to keep divisions out of the scan.
    # The same partition reached through another variable sums in another
    # order, so gains within TIE_RTOL count as ties and the earlier one stays.
    best_num = -1.0
    best_w = 1.0
    best_var = -1
    best_thr = 0.0
    for c in range(ncand):
        j = cands[c]
        sl = 0.0
        a = XT[j, S[j, start]]
        for k in range(start, end - 1):
            sl += y[S[j, k]] - mean
            b = XT[j, S[j, k + 1]]
            if a < b:
                nl = k + 1 - start
                w = nl * (m - nl)
                if sl * sl * best_w > best_num * w * (1.0 + TIE_RTOL):
                    best_num = sl * sl
                    best_w = w
                    best_var = j
                    thr = 0.5 * (a + b)
                    best_thr = thr if thr < b else a
            a = b
    # sse(parent) - sse(left) - sse(right)
    best_gain = best_num / best_w * m
    return best_var, best_thr, best_gain


@nb.njit(nogil=True, cache=True)
def _best_split_rows(X, y, rows, cands):
    n, p = X.shape
    counts = np.zeros(n, np.int64)
    for r in rows:
        counts[r] += 1
    S = np.empty((p, rows.size), np.int64)
    _fill_sorted(presort(X), counts, S)
    return _scan_split(np.ascontiguousarray(X.T), y, S, 0, rows.size, cands, cands.size)


@nb.njit(nogil=True, cache=True)
def _grow_tree(XT, y, order, counts, mtry, min_node, split_key,
               feat, thr, left, right, value, nsamp, S, buf, goleft):
    """Grow one tree on the row multiset given by ``counts``.

    ``XT`` is the transposed design, ``(p, n)``; ``order`` is
    :func:`presort` of the design.  Node arrays must hold at least
    ``2 * m`` entries and ``S`` must be ``(p, m)`` where ``m`` is the
    sample size; ``buf`` (length m) and ``goleft`` (int64, length n) are scratch.
    Returns the node count.
    """
    p = XT.shape[0]
    m = _fill_sorted(order, counts, S)
    varbuf = np.arange(p)
    cands = np.empty(mtry, np.int64)
    st_node = np.empty(2 * m, np.int64)
    st_start = np.empty(2 * m, np.int64)
    st_end = np.empty(2 * m, np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    top = 1
    n_nodes = 1
    counter = 0
    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_start[top]
        e = st_end[top]
        total = 0.0
        pure = True
        y0 = y[S[0, s]]
        for k in range(s, e):
            v = y[S[0, k]]
            total += v
            if v != y0:
                pure = False
        value[node] = total / (e - s)
        nsamp[node] = e - s
        feat[node] = -1
        thr[node] = 0.0
        left[node] = -1
        right[node] = -1
        if e - s < min_node or pure:
            continue
        for t in range(mtry):
            r = t + rng.draw_index(split_key, counter, p - t)
            counter += 1
            tmp = varbuf[t]
            varbuf[t] = varbuf[r]
            varbuf[r] = tmp
            # insertion keeps candidates ascending for the tie-break rule
            c = varbuf[t]
            q = t
            while q > 0 and cands[q - 1] > c:
                cands[q] = cands[q - 1]
                q -= 1
            cands[q] = c
        var, th, gain = _scan_split(XT, y, S, s, e, cands, mtry)
        if var < 0:
            continue
        nl = 0
        for k in range(s, e):
            r = S[var, k]
            g = 1 if XT[var, r] <= th else 0
            goleft[r] = g
            nl += g
        # children that will be leaves only need one list for their means
        n_lists = p if max(nl, e - s - nl) >= min_node else 1
        mid = s + nl
        for j in range(n_lists):
            a = s
            b = 0
            for k in range(s, e):
                r = S[j, k]
                g = goleft[r]
                # branch-free: write to both sides, advance one
                S[j, a] = r
                buf[b] = r
                a += g
                b += 1 - g
            for k in range(b):
                S[j, a + k] = buf[k]
        feat[node] = var
        thr[node] = th
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[top] = n_nodes + 1
        st_start[top] = mid
        st_end[top] = e
        st_node[top + 1] = n_nodes
        st_start[top + 1] = s
        st_end[top + 1] = mid
        top += 2
        n_nodes += 2
    return n_nodes


@nb.njit(nogil=True, cache=True)
def _predict_row(feat, thr, left, right, value, X, i):
    node = 0
    while feat[node] >= 0:
        if X[i, feat[node]] <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return value[node]


@nb.njit(nogil=True, cache=True)
def _predict_row_override(feat, thr, left, right, value, X, i, jo, xo):
    """Prediction for row ``i`` with column ``jo`` replaced by ``xo``."""
    node = 0
    while feat[node] >= 0:
        f = feat[node]
        v = xo if f == jo else X[i, f]
        if v <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return value[node]


@nb.njit(nogil=True, cache=True)
def _predict_many(feat, thr, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = _predict_row(feat, thr, left, right, value, X, i)
    return out


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arena.  ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    min_node_size: int = 5

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def n_leaves(self):
        return int(np.sum(self.feature == LEAF))

    def split_variables(self):
        return np.unique(self.feature[self.feature != LEAF])

    def predict(self, X):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        return _predict_many(self.feature, self.threshold, self.left,
                             self.right, self.value, X)

    def to_dict(self):
        nodes = []
        for k in range(self.n_nodes):
            if self.feature[k] == LEAF:
                nodes.append({"id": k, "leaf": True, "n": int(self.n_samples[k]),
                              "mean": float(self.value[k])})
            else:
                nodes.append({"id": k, "leaf": False, "n": int(self.n_samples[k]),
                              "variable": int(self.feature[k]),
                              "threshold": float(self.threshold[k]),
                              "left": int(self.left[k]), "right": int(self.right[k])})
        return {"min_node_size": self.min_node_size, "nodes": nodes}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def default_mtry(p):
    return max(1, p // 3)


def _as_xy(X, y):
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim == 1:
        X = X[:, None]
    y = np.ascontiguousarray(np.asarray(y, dtype=float))
    if y.shape != (X.shape[0],):
        raise ValueError(f"response length {y.size} does not match {X.shape[0]} rows")
    return X, y


def best_split(X, y, rows, candidate_vars):
    """Variance-minimizing split of the node holding ``rows``, or None."""
    X, y = _as_xy(X, y)
    idx = np.asarray(rows, dtype=np.int64)
    if idx.size < 2:
        raise ValueError("a node needs at least 2 rows to be split")
    cands = np.unique(np.asarray(candidate_vars, dtype=np.int64))
    if cands.size == 0:
        raise ValueError("empty candidate variable set")
    if idx.min() < 0 or idx.max() >= X.shape[0]:
        raise IndexError("row index out of range")
    var, th, _ = _best_split_rows(X, y, idx, cands)
    if var < 0:
        return None
    return SplitRule(int(var), float(th))


def split_score(y, left_mask):
    """Size-weighted sum of child variances (biased 1/n variances)."""
    y = np.asarray(y, dtype=float)
    left_mask = np.asarray(left_mask, dtype=bool)
    total = 0.0
    for part in (y[left_mask], y[~left_mask]):
        if part.size:
            total += part.size * part.var()
    return total / y.size


def build_tree(X, y, row_sample=None, mtry=None, key=0, min_node_size=5):
    """Grow a tree on ``row_sample`` (defaults to every row once).

    ``key`` identifies the random stream used to draw the per-node
    variable subsets (see :mod:`rfzi.rng`).
    """
    X, y = _as_xy(X, y)
    p = X.shape[1]
    rows = np.arange(X.shape[0]) if row_sample is None else np.asarray(row_sample, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("empty row sample")
    mtry = default_mtry(p) if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
    m, (n, p) = rows.size, X.shape
    feat = np.empty(2 * m, np.int64)
    thr = np.empty(2 * m)
    left = np.empty(2 * m, np.int64)
    right = np.empty(2 * m, np.int64)
    value = np.empty(2 * m)
    nsamp = np.empty(2 * m, np.int64)
    counts = np.bincount(rows, minlength=n).astype(np.int64)
    k = _grow_tree(np.ascontiguousarray(X.T), y, presort(X), counts, mtry, int(min_node_size), np.uint64(key),
                   feat, thr, left, right, value, nsamp,
                   np.empty((p, m), np.int64), np.empty(m, np.int64), np.zeros(n, np.int64))
    return Tree(feat[:k].copy(), thr[:k].copy(), left[:k].copy(), right[:k].copy(),
                value[:k].copy(), nsamp[:k].copy(), int(min_node_size))


def predict_tree(tree, row):
    return float(tree.predict(np.asarray(row, dtype=float)[None, :])[0])


def fit_1d_cart(xs, ys, min_node_size=5):
    """Regression tree of a curve ``ys`` against strictly increasing ``xs``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys differ in length")
    if xs.size == 0:
        raise ValueError("empty curve")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    return build_tree(xs[:, None], ys, mtry=1, min_node_size=min_node_size)
