"""CART with exact split search.

Thresholds are midpoints between consecutive distinct sorted values; rows
with ``x <= threshold`` go left.  Impurity ties go to the lower feature index,
then the lower threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_DEPTH_CAP = 32
CRITERIA = ("variance", "gini", "newton")


@dataclass
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: object = None  # None | "sqrt" | "log2" | "auto" | int | float
    criterion: str = "variance"
    reg_lambda: float = 1.0      # only for the second-order criterion

    def depth_limit(self) -> int:
        if self.max_depth is None:
            return MAX_DEPTH_CAP
        return min(int(self.max_depth), MAX_DEPTH_CAP)

    def n_features(self, p: int) -> int:
        mf = self.max_features
        if mf is None or mf == "auto":
            return p
        if mf == "sqrt":
            return max(1, int(math.sqrt(p)))
        if mf == "log2":
            return max(1, int(math.log2(p)))
        if isinstance(mf, float):
            return max(1, int(mf * p))
        return max(1, min(p, int(mf)))


@dataclass
class Tree:
    feature: np.ndarray     # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray       # (n_nodes, n_out)
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max()) if self.n_nodes else 0

    def used_features(self) -> set:
        return set(int(f) for f in self.feature if f >= 0)

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "n_samples": self.n_samples.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=float).reshape(len(d["feature"]), -1),
                   np.array(d["n_samples"], dtype=np.int64))


def _node_stats(criterion, y, g, h, n_classes):
    """Additive per-row statistics, shape (s, n); row counts stay implicit."""
    if criterion == "variance":
        return np.asarray(y, dtype=float)[None, :]
    if criterion == "gini":
        y = np.asarray(y).astype(int)
        s = np.zeros((n_classes, len(y)))
        s[y, np.arange(len(y))] = 1.0
        return s
    return np.vstack([np.asarray(g, dtype=float), np.asarray(h, dtype=float)])


def _score(criterion, S, cnt, lam):
    """Split-proxy score of aggregated statistics (larger is purer)."""
    if criterion == "variance":
        return S[0] ** 2 / cnt
    if criterion == "gini":
        return (S ** 2).sum(axis=0) / cnt
    return S[0] ** 2 / (S[1] + lam)


def _leaf_value(criterion, S, cnt, lam):
    if criterion == "variance":
        return np.array([S[0] / cnt])
    if criterion == "gini":
        return S / cnt
    return np.array([-S[0] / (S[1] + lam)])


def _is_pure(criterion, st):
    if criterion == "variance":
        return st[0].max() == st[0].min()
    if criterion == "gini":
        return np.count_nonzero(st.sum(axis=1)) <= 1
    return False


def _split_sorted(xs, ss, total, criterion, min_leaf, lam, features):
    """Best cut from per-feature sorted values ``xs`` (k, m) and stats ``ss`` (s, k, m)."""
    m = xs.shape[1]
    cs = np.cumsum(ss, axis=2)[:, :, :-1]      # left block at cut i
    right = total[:, None, None] - cs
    n_left = np.arange(1, m, dtype=float)
    ok = (xs[:, :-1] < xs[:, 1:]) & (n_left >= min_leaf) & (m - n_left >= min_leaf)
    if not ok.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        score = _score(criterion, cs, n_left, lam) + _score(criterion, right, m - n_left, lam)
    score = np.where(ok, score, -np.inf)
    best = score.max()
    tol = 1e-12 * max(1.0, abs(best))
    fpos, cut = np.argwhere(score >= best - tol)[0]   # lowest feature, then lowest cut
    decrease = float(score[fpos, cut]) - float(_score(criterion, total, m, lam))
    lo, hi = xs[fpos, cut], xs[fpos, cut + 1]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return decrease, int(features[fpos]), float(thr)


def best_split(X, y=None, criterion="variance", min_leaf=1, lam=1.0, features=None, *,
               g=None, h=None, n_classes=0):
    """Exhaustive best split of one node.

    Returns (decrease, feature, threshold) or None.  ``decrease`` is the
    weighted impurity drop n*I(parent) - n_l*I(left) - n_r*I(right) for the
    variance and gini criteria and the structure-score gain for ``newton``.
    """
    X = np.asarray(X, dtype=float)
    m, p = X.shape
    features = np.arange(p) if features is None else np.asarray(features)
    if m < 2 * min_leaf or len(features) == 0:
        return None
    if criterion == "gini" and not n_classes:
        n_classes = int(np.max(y)) + 1
    stats = _node_stats(criterion, y, g, h, n_classes)
    XT = X.T[features]
    order = np.argsort(XT, axis=1, kind="stable")
    xs = np.take_along_axis(XT, order, axis=1)
    return _split_sorted(xs, stats[:, order], stats.sum(axis=1), criterion, min_leaf, lam, features)


def _filter_order(order, keep):
    """Restrict per-feature sort orders (p, m) to rows flagged in ``keep``."""
    sel = keep[order]
    return order[sel].reshape(order.shape[0], -1)


def presort(X) -> np.ndarray:
    """Stable per-feature argsort, shape (p, n)."""
    return np.argsort(np.asarray(X, dtype=float).T, axis=1, kind="stable")


def fit_tree(X, y=None, params: TreeParams | None = None, rng=None, *, g=None, h=None,
             n_classes: int = 0, order=None) -> Tree:
    """Grow one tree.

    ``criterion`` picks the target: ``variance`` regresses ``y``, ``gini``
    classifies integer ``y`` into ``n_classes`` and ``newton`` uses gradient
    ``g`` and hessian ``h`` with leaf value -G/(H + lambda).  ``order`` may
    carry a precomputed ``presort(X)``; node orders are filtered from it
    rather than re-sorted.
    """
    params = params or TreeParams()
    crit = params.criterion
    if crit not in CRITERIA:
        raise ValueError(f"unknown criterion {crit!r}")
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < 1:
        raise ValueError("cannot fit a tree on zero samples")
    if crit == "gini" and n_classes == 0:
        n_classes = int(np.max(y)) + 1
    rng = rng if rng is not None else np.random.default_rng(0)
    stats = _node_stats(crit, y, g, h, n_classes)
    lam = params.reg_lambda
    k = params.n_features(p)
    max_depth = params.depth_limit()
    msl = max(1, int(params.min_samples_leaf))
    mss = max(2, int(params.min_samples_split))
    XT = np.ascontiguousarray(X.T)
    if order is None:
        order = presort(X)

    feature, threshold, left, right, value, counts = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(_leaf_value(crit, stats[:, idx].sum(axis=1), len(idx), lam))
        counts.append(len(idx))
        return len(feature) - 1

    keep = np.zeros(n, dtype=bool)
    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), order, 0)]
    while stack:
        node, idx, order, depth = stack.pop()
        m = len(idx)
        if depth >= max_depth or m < mss or m < 2 * msl:
            continue
        st = stats[:, idx]
        if _is_pure(crit, st):
            continue
        feats = np.arange(p) if k >= p else np.sort(rng.choice(p, size=k, replace=False))
        osub = order if k >= p else order[feats]
        xs = np.take_along_axis(XT if k >= p else XT[feats], osub, axis=1)
        total = st.sum(axis=1)
        found = _split_sorted(xs, stats[:, osub], total, crit, msl, lam, feats)
        tol = 1e-12 * max(1.0, abs(float(_score(crit, total, m, lam))))
        if found is None or found[0] <= tol:
            continue
        _, j, thr = found
        mask = X[idx, j] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = j, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        keep[:] = False
        keep[li] = True
        lo = _filter_order(order, keep)
        ro = _filter_order(order, ~keep)
        # depth-first, left subtree first
        stack.append((right[node], ri, ro, depth + 1))
        stack.append((left[node], li, lo, depth + 1))

    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.vstack(value), np.array(counts, dtype=np.int64))


def fit_cart(X, y, params: TreeParams | None = None, seed=0, n_classes: int = 0) -> Tree:
    """Single CART; feature subsampling draws from stream (seed, 0)."""
    rng = np.random.default_rng([seed, 0]) if isinstance(seed, (int, np.integer)) else seed
    return fit_tree(X, y, params, rng, n_classes=n_classes)
