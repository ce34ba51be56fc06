"""Random forest and gradient boosting (first- and second-order) on the in-repo CART.

Randomness for tree or stage ``i`` comes from ``np.random.default_rng([seed, i])``,
so parallel and serial fits agree bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .tree import Tree, TreeParams, _filter_order, fit_tree, presort

LOSSES = ("squared", "logistic", "multinomial")
_EPS = 1e-12


@dataclass
class ForestParams:
    n_estimators: int = 100
    max_samples: float | None = None
    bootstrap: bool = True
    oob_score: bool = False
    tree: TreeParams = field(default_factory=TreeParams)


@dataclass
class BoostParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    variant: str = "gb"           # "gb" first-order, "xgb" second-order
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    reg_lambda: float = 1.0
    tree: TreeParams = field(default_factory=lambda: TreeParams(max_depth=3))


@dataclass
class TreeEnsemble:
    kind: str                  # RandomForest | GradientBoosting | SecondOrderBoosting
    loss: str                  # squared | gini | logistic | multinomial
    n_outputs: int
    trees: list                # RF: list of Tree; boosting: list of stages, each a list of K trees
    init: np.ndarray
    learning_rate: float = 1.0
    seed: int = 0
    params: dict = field(default_factory=dict)
    loss_trace: list = field(default_factory=list)
    oob_error: float | None = None

    # raw additive score for boosting, averaged output for forests
    def raw(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.kind == "RandomForest":
            acc = np.zeros((X.shape[0], self.n_outputs))
            for t in self.trees:
                acc += t.predict(X)
            return acc / len(self.trees)
        F = np.tile(self.init, (X.shape[0], 1))
        for stage in self.trees:
            for k, t in enumerate(stage):
                F[:, k] += t.predict(X)[:, 0]
        return F

    def predict(self, X) -> np.ndarray:
        """Regression values, or class probabilities (n, K) for classifiers."""
        F = self.raw(X)
        if self.loss == "squared":
            return F[:, 0]
        if self.loss == "gini":
            return F
        if self.loss == "logistic":
            p = _sigmoid(F[:, 0])
            return np.column_stack([1 - p, p])
        return _softmax(F)

    def staged_loss(self, X, y) -> list:
        F = np.tile(self.init, (len(y), 1))
        out = [_loss(self.loss, y, F)]
        for stage in self.trees:
            for k, t in enumerate(stage):
                F[:, k] += t.predict(X)[:, 0]
            out.append(_loss(self.loss, y, F))
        return out

    def used_features(self) -> set:
        trees = self.trees if self.kind == "RandomForest" else [t for s in self.trees for t in s]
        out = set()
        for t in trees:
            out |= t.used_features()
        return out

    def to_dict(self) -> dict:
        if self.kind == "RandomForest":
            trees = [t.to_dict() for t in self.trees]
        else:
            trees = [[t.to_dict() for t in s] for s in self.trees]
        return {"kind": self.kind, "loss": self.loss, "n_outputs": self.n_outputs,
                "init": self.init.tolist(), "learning_rate": self.learning_rate,
                "seed": self.seed, "params": self.params, "loss_trace": self.loss_trace,
                "oob_error": self.oob_error, "trees": trees}

    @classmethod
    def from_dict(cls, d) -> "TreeEnsemble":
        if d["kind"] == "RandomForest":
            trees = [Tree.from_dict(t) for t in d["trees"]]
        else:
            trees = [[Tree.from_dict(t) for t in s] for s in d["trees"]]
        return cls(d["kind"], d["loss"], d["n_outputs"], trees, np.array(d["init"], dtype=float),
                   d["learning_rate"], d["seed"], d["params"], d["loss_trace"], d["oob_error"])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(F):
    e = np.exp(F - F.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _loss(loss, y, F) -> float:
    if loss == "squared":
        return float(0.5 * np.mean((y - F[:, 0]) ** 2))
    if loss == "logistic":
        f = F[:, 0]
        return float(np.mean(np.logaddexp(0.0, f) - y * f))
    m = F.max(axis=1)
    lse = m + np.log(np.exp(F - m[:, None]).sum(axis=1))
    return float(np.mean(lse - F[np.arange(len(y)), y.astype(int)]))


# -- random forest -----------------------------------------------------------

def _forest_tree(X, y, params: ForestParams, seed, i, n_classes):
    rng = np.random.default_rng([seed, i])
    n = X.shape[0]
    if params.bootstrap:
        m = n if params.max_samples is None else max(1, int(round(params.max_samples * n)))
        rows = rng.integers(0, n, size=m)
    else:
        rows = np.arange(n)
    tree = fit_tree(X[rows], y[rows], params.tree, rng, n_classes=n_classes)
    return tree, rows


def fit_forest(X, y, params: ForestParams | None = None, seed: int = 0, *,
               classification: bool = False, n_classes: int = 0, jobs: int = 1) -> TreeEnsemble:
    """Bagged CART ensemble: mean value (regression) or mean class distribution."""
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if classification:
        n_classes = n_classes or int(y.max()) + 1
        tparams = replace(params.tree, criterion="gini")
    else:
        tparams = replace(params.tree, criterion="variance")
    params = replace(params, tree=tparams)
    n_out = n_classes if classification else 1
    if jobs != 1 and params.n_estimators > 1:
        from joblib import Parallel, delayed
        fitted = Parallel(n_jobs=jobs)(delayed(_forest_tree)(X, y, params, seed, i, n_classes)
                                       for i in range(params.n_estimators))
    else:
        fitted = [_forest_tree(X, y, params, seed, i, n_classes) for i in range(params.n_estimators)]
    trees = [t for t, _ in fitted]
    ens = TreeEnsemble("RandomForest", "gini" if classification else "squared", n_out, trees,
                       np.zeros(n_out), 1.0, seed,
                       {"n_estimators": params.n_estimators, "max_samples": params.max_samples,
                        "bootstrap": params.bootstrap, **_tree_param_dict(tparams)})
    if params.oob_score and params.bootstrap:
        acc = np.zeros((X.shape[0], n_out))
        hits = np.zeros(X.shape[0])
        for t, rows in fitted:
            oob = np.ones(X.shape[0], dtype=bool)
            oob[rows] = False
            acc[oob] += t.predict(X[oob])
            hits[oob] += 1
        seen = hits > 0
        pred = acc[seen] / hits[seen, None]
        if classification:
            ens.oob_error = float(np.mean(pred.argmax(axis=1) != y[seen]))
        else:
            ens.oob_error = float(np.mean(np.abs(pred[:, 0] - y[seen])))
    return ens


def _tree_param_dict(tp: TreeParams) -> dict:
    return {"max_depth": tp.max_depth, "min_samples_split": tp.min_samples_split,
            "min_samples_leaf": tp.min_samples_leaf, "max_features": tp.max_features,
            "criterion": tp.criterion}


# -- boosting ----------------------------------------------------------------

def _init_score(loss, y, K):
    if loss == "squared":
        return np.array([float(np.mean(y))])
    if loss == "logistic":
        p = np.clip(np.mean(y), 1e-6, 1 - 1e-6)
        return np.array([float(np.log(p / (1 - p)))])
    prior = np.bincount(y.astype(int), minlength=K) / len(y)
    return np.log(np.clip(prior, 1e-6, None))


def _grad_hess(loss, y, F, K):
    """Gradient and hessian of the per-row loss, shape (n, K)."""
    if loss == "squared":
        return (F[:, :1] - y[:, None]), np.ones((len(y), 1))
    if loss == "logistic":
        p = _sigmoid(F[:, 0])
        return (p - y)[:, None], (p * (1 - p))[:, None]
    P = _softmax(F)
    Y = np.zeros_like(P)
    Y[np.arange(len(y)), y.astype(int)] = 1.0
    return P - Y, P * (1 - P)


def _newton_leaves(tree: Tree, leaf_of_row, g, h, loss, K):
    """Replace leaf values by one Newton step on the rows in each leaf."""
    r = -g
    num = np.bincount(leaf_of_row, weights=r, minlength=tree.n_nodes)
    if loss == "squared":
        den = np.bincount(leaf_of_row, minlength=tree.n_nodes).astype(float)
    elif loss == "logistic":
        den = np.bincount(leaf_of_row, weights=h, minlength=tree.n_nodes)
    else:
        den = np.bincount(leaf_of_row, weights=np.abs(r) * (1 - np.abs(r)), minlength=tree.n_nodes)
        num = num * (K - 1) / K
    leaves = tree.feature < 0
    vals = np.where(np.abs(den) > _EPS, num / np.where(np.abs(den) > _EPS, den, 1.0), 0.0)
    tree.value[leaves, 0] = vals[leaves]


def fit_gbdt(X, y, loss: str, params: BoostParams | None = None, seed: int = 0,
             n_classes: int = 0) -> TreeEnsemble:
    """Stage-wise boosting.

    ``variant="gb"`` fits variance trees to the negative gradient and sets
    leaves by a Newton step; ``variant="xgb"`` grows trees on the second-order
    gain with leaves -G/(H + lambda) and per-stage row/column subsampling.
    A stage that would raise the training loss is halved until it does not
    (and dropped if that never happens), so the loss trace is non-increasing.
    """
    params = params or BoostParams()
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    if not params.learning_rate > 0:
        raise ValueError(f"learning_rate must be > 0, got {params.learning_rate}")
    if params.variant not in ("gb", "xgb"):
        raise ValueError(f"unknown boosting variant {params.variant!r}")
    if not 0 < params.subsample <= 1 or not 0 < params.colsample_bytree <= 1:
        raise ValueError("subsample and colsample_bytree must lie in (0, 1]")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    K = (n_classes or int(y.max()) + 1) if loss == "multinomial" else 1
    second = params.variant == "xgb"
    tparams = replace(params.tree, criterion="newton" if second else "variance",
                      reg_lambda=params.reg_lambda)

    init = _init_score(loss, y, K)
    F = np.tile(init, (n, 1))
    trace = [_loss(loss, y, F)]
    stages = []
    order = presort(X)
    for m in range(params.n_estimators):
        rng = np.random.default_rng([seed, m])
        rows = np.arange(n)
        if params.subsample < 1:
            rows = np.sort(rng.choice(n, size=max(1, int(round(params.subsample * n))), replace=False))
        cols = np.arange(p)
        if params.colsample_bytree < 1:
            cols = np.sort(rng.choice(p, size=max(1, int(round(params.colsample_bytree * p))), replace=False))
        g, h = _grad_hess(loss, y, F, K)
        Xs = X[np.ix_(rows, cols)]
        if rows.size == n and cols.size == p:
            ps = order
        else:
            pos = np.full(n, -1)
            pos[rows] = np.arange(rows.size)
            ps = pos[_filter_order(order[cols], pos >= 0)]
        stage, delta = [], np.zeros_like(F)
        for k in range(K):
            if second:
                t = fit_tree(Xs, None, tparams, rng, g=g[rows, k], h=h[rows, k], order=ps)
            else:
                t = fit_tree(Xs, -g[rows, k], tparams, rng, order=ps)
                _newton_leaves(t, t.apply(Xs), g[rows, k], h[rows, k], loss, K)
            t.feature = np.where(t.feature >= 0, cols[np.maximum(t.feature, 0)], -1)
            t.value *= params.learning_rate
            stage.append(t)
            delta[:, k] = t.predict(X)[:, 0]
        cur = trace[-1]
        new = _loss(loss, y, F + delta)
        tries = 0
        while new > cur:
            tries += 1
            for t in stage:
                t.value *= 0.0 if tries > 30 else 0.5
            delta = np.column_stack([t.predict(X)[:, 0] for t in stage])
            new = _loss(loss, y, F + delta)
        F = F + delta
        trace.append(_loss(loss, y, F))
        stages.append(stage)

    kind = "SecondOrderBoosting" if second else "GradientBoosting"
    return TreeEnsemble(kind, loss, K, stages, init, params.learning_rate, seed,
                        {"n_estimators": params.n_estimators, "learning_rate": params.learning_rate,
                         "subsample": params.subsample, "colsample_bytree": params.colsample_bytree,
                         "reg_lambda": params.reg_lambda, **_tree_param_dict(tparams)},
                        trace)
