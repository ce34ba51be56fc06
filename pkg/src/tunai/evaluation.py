"""Metrics, stratified splitting, k-fold grid search and permutation importance."""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from itertools import product

import numpy as np


class MetricError(ValueError):
    pass


# -- metrics -----------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are observed classes, columns predicted."""

    counts: np.ndarray
    classes: tuple = ()

    @classmethod
    def from_labels(cls, observed, predicted, n_classes=None, classes=()):
        obs = np.asarray(observed, dtype=int)
        pred = np.asarray(predicted, dtype=int)
        if obs.shape != pred.shape:
            raise MetricError("observed and predicted differ in length")
        k = n_classes or int(max(obs.max(initial=0), pred.max(initial=0))) + 1
        cm = np.zeros((k, k), dtype=np.int64)
        np.add.at(cm, (obs, pred), 1)
        return cls(cm, tuple(classes) or tuple(str(i) for i in range(k)))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def per_class_f1(self) -> np.ndarray:
        cm = self.counts.astype(float)
        tp = np.diag(cm)
        fp = cm.sum(axis=0) - tp
        fn = cm.sum(axis=1) - tp
        den = 2 * tp + fp + fn
        return np.where(den > 0, 2 * tp / np.where(den > 0, den, 1.0), 0.0)


def f1(cm: ConfusionMatrix, mode: str = "binary") -> float:
    """F1 of the positive (last) class, or support-weighted mean over classes."""
    if cm.n == 0:
        raise MetricError("empty confusion matrix")
    per = cm.per_class_f1()
    if mode == "binary":
        return float(per[-1])
    if mode != "weighted":
        raise ValueError(f"unknown F1 mode {mode!r}")
    support = cm.counts.sum(axis=1).astype(float)
    keep = support > 0
    return float(np.sum(per[keep] * support[keep]) / support[keep].sum())


def midranks(x) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    start = np.r_[0, np.nonzero(xs[1:] != xs[:-1])[0] + 1]
    stop = np.r_[start[1:], len(x)]
    avg = (start + stop + 1) / 2.0
    ranks[order] = np.repeat(avg, stop - start)
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with mid-ranks for ties."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise MetricError("roc_auc needs both classes present")
    r = midranks(s)
    return float((r[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def roc_auc_ovr(prob, labels) -> float:
    """Macro one-vs-rest AUC over classes present in ``labels``."""
    prob = np.asarray(prob, dtype=float)
    y = np.asarray(labels, dtype=int)
    if prob.ndim == 1 or prob.shape[1] == 2:
        col = prob if prob.ndim == 1 else prob[:, 1]
        return roc_auc(col, y == 1)
    vals = [roc_auc(prob[:, k], y == k) for k in range(prob.shape[1])
            if 0 < np.count_nonzero(y == k) < len(y)]
    if not vals:
        raise MetricError("roc_auc needs at least two classes present")
    return float(np.mean(vals))


def mae(pred, obs) -> float:
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.shape != obs.shape:
        raise MetricError(f"length mismatch: {pred.shape} vs {obs.shape}")
    if pred.size == 0:
        raise MetricError("mae of empty input")
    return float(np.mean(np.abs(pred - obs)))


# direction per metric: +1 maximize, -1 minimize
METRIC_DIRECTION = {"auc": 1, "f1": 1, "f1_weighted": 1, "mae": -1}


def better(a: float, b: float, metric: str) -> bool:
    return (a - b) * METRIC_DIRECTION[metric] > 0


# -- splitting ---------------------------------------------------------------

def _largest_remainder(sizes, frac, total):
    quota = np.asarray(sizes, dtype=float) * frac
    base = np.floor(quota).astype(int)
    rem = quota - base
    extra = total - int(base.sum())
    order = sorted(range(len(sizes)), key=lambda i: (-rem[i], i))
    for i in order[:max(extra, 0)]:
        base[i] += 1
    return base


def stratified_split(strata, test_frac: float, seed: int):
    """Shuffled per-stratum split; returns (train_idx, test_idx).

    The test set holds ceil(test_frac * n) items, shared across strata by
    largest remainder, so every stratum is within one item of its target.
    """
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must lie in (0, 1)")
    strata = np.asarray(strata)
    keys, inv = np.unique(strata, return_inverse=True)
    sizes = np.bincount(inv, minlength=len(keys))
    if np.any(sizes < 2):
        small = keys[np.argmin(sizes)]
        raise ValueError(f"stratum {small!r} has fewer than 2 items")
    n_test = math.ceil(test_frac * len(strata) - 1e-9)
    take = _largest_remainder(sizes, test_frac, n_test)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for k in range(len(keys)):
        idx = np.nonzero(inv == k)[0]
        idx = idx[rng.permutation(len(idx))]
        test.append(idx[:take[k]])
        train.append(idx[take[k]:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def kfold(indices, k: int, seed: int, stratify_labels=None) -> list:
    """k disjoint folds covering ``indices``; sizes differ by at most one.

    Stratified folds deal each class round-robin, continuing the deal across
    classes so that totals stay balanced.
    """
    idx = np.asarray(indices)
    n = len(idx)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of items {n}")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    if stratify_labels is None:
        perm = rng.permutation(n)
        for pos, i in enumerate(perm):
            buckets[pos % k].append(idx[i])
    else:
        lab = np.asarray(stratify_labels)
        pos = 0
        for c in np.unique(lab):
            members = np.nonzero(lab == c)[0]
            for i in members[rng.permutation(len(members))]:
                buckets[pos % k].append(idx[i])
                pos += 1
    return [np.sort(np.array(b, dtype=idx.dtype)) for b in buckets]


# -- grid search -------------------------------------------------------------

@dataclass
class HyperGrid:
    params: dict  # name -> list of candidate values, in declared order

    def __post_init__(self):
        for k, v in self.params.items():
            if not isinstance(v, (list, tuple)) or len(v) == 0:
                raise ValueError(f"grid parameter {k!r} needs a non-empty list")

    @property
    def size(self) -> int:
        return int(np.prod([len(v) for v in self.params.values()])) if self.params else 1

    def candidates(self) -> list:
        names = list(self.params)
        return [dict(zip(names, combo)) for combo in product(*(self.params[n] for n in names))]


@dataclass
class SearchResult:
    candidates: list
    mean_scores: list
    std_scores: list
    best_index: int
    metric: str
    refit: object = None
    failures: dict = field(default_factory=dict)

    @property
    def best_params(self) -> dict:
        return self.candidates[self.best_index]

    @property
    def best_score(self) -> float:
        return self.mean_scores[self.best_index]

    def rows(self) -> list:
        out = []
        for i, (c, m, s) in enumerate(zip(self.candidates, self.mean_scores, self.std_scores)):
            out.append([i, _params_str(c), m, s, self.failures.get(i, "")])
        return out


def _params_str(p: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in p.items())


def _cv_candidate(fit, score, params, X, y, folds):
    vals = []
    n = len(y)
    for f in folds:
        tr = np.setdiff1d(np.arange(n), f)
        model = fit(params, X[tr], y[tr])
        vals.append(score(model, X[f], y[f]))
    return vals


def grid_search(fit, score, grid: HyperGrid, X, y, metric: str, *, k: int = 5, seed: int = 0,
                stratify=None, jobs: int = 1) -> SearchResult:
    """Full cartesian sweep with k-fold CV, then refit of the best on all rows.

    ``fit(params, X, y)`` returns a model and ``score(model, X, y)`` a float.
    Candidates whose fit raises are recorded and skipped; ties keep the
    earliest candidate in grid order.
    """
    if metric not in METRIC_DIRECTION:
        raise ValueError(f"unknown metric {metric!r}")
    cands = grid.candidates()
    folds = kfold(np.arange(len(y)), k, seed, stratify)

    def run(c):
        try:
            return _cv_candidate(fit, score, c, X, y, folds), None
        except Exception as exc:  # recorded per candidate
            return None, f"{type(exc).__name__}: {exc}"

    if jobs != 1 and len(cands) > 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=jobs)(delayed(run)(c) for c in cands)
    else:
        results = [run(c) for c in cands]

    means, stds, failures = [], [], {}
    best = None
    for i, (vals, err) in enumerate(results):
        if vals is None:
            failures[i] = err
            means.append(float("nan"))
            stds.append(float("nan"))
            continue
        m = float(np.mean(vals))
        means.append(m)
        stds.append(float(np.std(vals)))
        if best is None or better(m, means[best], metric):
            best = i
    if best is None:
        raise RuntimeError("all grid candidates failed: " + "; ".join(failures.values()))
    refit = fit(cands[best], X, y)
    return SearchResult(cands, means, stds, best, metric, refit, failures)


# -- permutation importance --------------------------------------------------

@dataclass
class ImportanceTable:
    features: list
    mean_drop: np.ndarray
    std_drop: np.ndarray
    baseline: float

    def ranked(self) -> list:
        order = sorted(range(len(self.features)), key=lambda j: -self.mean_drop[j])
        return [(self.features[j], float(self.mean_drop[j]), float(self.std_drop[j])) for j in order]

    def rank_of(self, name) -> int:
        return [f for f, _, _ in self.ranked()].index(name) + 1

    def top(self, n=10) -> list:
        return self.ranked()[:n]


def permutation_importance(score, X, y, metric: str, repeats: int = 5, seed: int = 0,
                           features=None) -> ImportanceTable:
    """Mean score drop when one column is shuffled.

    ``score(X, y)`` scores a fixed fitted model.  The drop is signed so that
    positive always means the feature helps, whatever the metric direction.
    Column j in repeat r is shuffled with stream (seed, j, r).
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.array(X, dtype=float)
    p = X.shape[1]
    sign = METRIC_DIRECTION[metric]
    base = score(X, y)
    drops = np.zeros((p, repeats))
    for j in range(p):
        col = X[:, j].copy()
        for r in range(repeats):
            rng = np.random.default_rng([seed, j, r])
            X[:, j] = col[rng.permutation(len(col))]
            drops[j, r] = sign * (base - score(X, y))
        X[:, j] = col
    names = list(features) if features is not None else [f"x{j}" for j in range(p)]
    return ImportanceTable(names, drops.mean(axis=1), drops.std(axis=1), base)


# -- reports -----------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def format_table(header, rows) -> str:
    """Aligned plain-text table."""
    cells = [[str(h) for h in header]] + [[_cell(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def atomic_write(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_table(base_path, header, rows):
    """Write ``base_path``.csv and ``base_path``.txt twins."""
    import csv
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    base_path = os.fspath(base_path)
    atomic_write(base_path + ".csv", buf.getvalue())
    atomic_write(base_path + ".txt", format_table(header, rows))
