"""Trained-model wrapper: schema checks, task adapters, fitting, search and a text file format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..evaluation import (HyperGrid, MetricError, SearchResult, grid_search, mae, roc_auc,
                          roc_auc_ovr)
from ..features import Level, Task, labels
from .baseline import RULE_COLUMNS, BaselineModel, fit_baseline
from .ensemble import BoostParams, ForestParams, TreeEnsemble, fit_forest, fit_gbdt
from .linear import LinearModel, fit_linear
from .tree import TreeParams

FORMAT = "tunai-model"
VERSION = 1
MODEL_KINDS = ("baseline", "linear", "rf", "gb", "xgb")
BASELINE_FEATURES = list(RULE_COLUMNS.values())


class SchemaError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


def argmax_classes(scores) -> np.ndarray:
    """Class index with the largest score; ties go to the lower class."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape[0] == 0:
        return np.zeros(0, dtype=int)
    return np.argmax(scores, axis=1)


@dataclass
class TrainedModel:
    kind: str
    task: Task
    level: str | None
    features: list
    body: object
    medians: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0

    # -- inputs --------------------------------------------------------------

    def select(self, df: pd.DataFrame) -> np.ndarray:
        """Pull this model's columns out of a wider dataset and fill NaNs."""
        missing = [c for c in self.features if c not in df.columns]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")
        X = df[self.features].to_numpy(dtype=float)
        for j, c in enumerate(self.features):
            if c in self.medians:
                col = X[:, j]
                col[np.isnan(col)] = self.medians[c]
        return X

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, pd.DataFrame):
            cols = list(X.columns)
            missing = [c for c in self.features if c not in cols]
            extra = [c for c in cols if c not in self.features]
            if missing or extra:
                parts = []
                if missing:
                    parts.append("missing columns: " + ", ".join(missing))
                if extra:
                    parts.append("extra columns: " + ", ".join(extra))
                raise SchemaError("; ".join(parts))
            return self.select(X)
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise SchemaError(f"expected {len(self.features)} columns, got shape {X.shape}")
        return X

    # -- outputs -------------------------------------------------------------

    def predict(self, X) -> np.ndarray:
        """Values for regression tasks, class scores (n, K) for classification."""
        X = self._matrix(X)
        K = self.task.n_classes
        if X.shape[0] == 0:
            return np.zeros((0, K)) if K else np.zeros(0)
        if isinstance(self.body, BaselineModel):
            return self.body.scores(X) if K else self.body.predict(X)
        out = self.body.predict(X)
        if not K:
            out = np.ravel(out)
            return np.minimum(out, 100.0) if self.task is Task.REGRESSION_THRESHOLD else out
        return out

    def predict_proba(self, X) -> np.ndarray:
        if not self.task.is_classification:
            raise ValueError("regression models have no class probabilities")
        return self.predict(X)

    def predict_class(self, X, thresholds=None) -> np.ndarray:
        """Class labels: argmax for classifiers, binning by ``thresholds`` for regressors."""
        if self.task.is_classification:
            if isinstance(self.body, BaselineModel):
                X = self._matrix(X)
                return self.body.predict(X).astype(int) if len(X) else np.zeros(0, dtype=int)
            return argmax_classes(self.predict(X))
        if thresholds is None:
            raise ValueError("regression predict_class needs thresholds")
        return np.digitize(self.predict(X), np.sort(np.atleast_1d(thresholds)), right=False)

    def positive_scores(self, X) -> np.ndarray:
        P = self.predict(X)
        return P[:, 1] if P.ndim == 2 else P

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {"kind": self.kind, "task": self.task.value, "level": self.level,
                "features": list(self.features), "medians": self.medians,
                "params": _jsonable(self.params), "seed": _jsonable(self.seed),
                "body": self.body.to_dict()}

    def to_text(self) -> str:
        head = f"{FORMAT} {VERSION}\n"
        schema = "features " + json.dumps(list(self.features)) + "\n"
        return head + schema + json.dumps(self.to_dict(), sort_keys=True, allow_nan=False) + "\n"

    def save(self, path):
        from ..evaluation import atomic_write
        atomic_write(path, self.to_text())


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


_BODIES = {"baseline": BaselineModel, "linear": LinearModel, "rf": TreeEnsemble,
           "gb": TreeEnsemble, "xgb": TreeEnsemble}


def from_text(text: str) -> TrainedModel:
    lines = text.split("\n")
    if len(lines) < 3 or not lines[0].startswith(FORMAT + " "):
        raise ModelFormatError("not a model file")
    version = lines[0].split()[1]
    if version != str(VERSION):
        raise ModelFormatError(f"unsupported model format version {version}")
    d = json.loads(lines[2])
    if json.loads(lines[1][len("features "):]) != d["features"]:
        raise ModelFormatError("feature header disagrees with body")
    kind = d["kind"]
    if kind not in _BODIES:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    body = _BODIES[kind].from_dict(d["body"])
    return TrainedModel(kind, Task(d["task"]), d["level"], d["features"], body,
                        d["medians"], d["params"], d["seed"])


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return from_text(fh.read())


# -- fitting -------------------------------------------------------------------

def tree_params(p: dict, max_depth=None) -> TreeParams:
    mf = p.get("max_features")
    return TreeParams(max_depth=p.get("max_depth", max_depth),
                      min_samples_split=int(p.get("min_samples_split", 2)),
                      min_samples_leaf=int(p.get("min_samples_leaf", 1)),
                      max_features=None if mf == "auto" else mf,
                      reg_lambda=float(p.get("reg_lambda", 1.0)))


def forest_params(p: dict) -> ForestParams:
    return ForestParams(n_estimators=int(p.get("n_estimators", 100)),
                        max_samples=p.get("max_samples"),
                        bootstrap=bool(p.get("bootstrap", True)),
                        oob_score=bool(p.get("oob_score", False)),
                        tree=tree_params(p))


def boost_params(kind: str, p: dict) -> BoostParams:
    xgb = kind == "xgb"
    return BoostParams(n_estimators=int(p.get("n_estimators", 100)),
                       learning_rate=float(p.get("learning_rate", 0.3 if xgb else 0.1)),
                       variant="xgb" if xgb else "gb",
                       subsample=float(p.get("subsample", 1.0)),
                       colsample_bytree=float(p.get("colsample_bytree", 1.0)),
                       reg_lambda=float(p.get("reg_lambda", 1.0)),
                       tree=tree_params(p, max_depth=6 if xgb else 3))


def fit_model(kind: str, task, X, y, params: dict | None = None, seed=0, *, jobs: int = 1,
              level=None, medians=None) -> TrainedModel:
    """Fit one model of ``kind`` on a feature frame ``X`` and biomass ``y`` (tonnes)."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    task = Task(task)
    params = dict(params or {})
    if not isinstance(X, pd.DataFrame):
        raise TypeError("fit_model expects a DataFrame with named feature columns")
    features = list(X.columns)
    A = X.to_numpy(dtype=float)
    if A.shape[0] == 0:
        raise ValueError("empty training set")
    y = np.asarray(y, dtype=float)
    yt = labels(y, task)
    K = task.n_classes
    if kind == "baseline":
        if features != BASELINE_FEATURES:
            raise SchemaError(f"baseline needs columns {BASELINE_FEATURES}, got {features}")
        body = fit_baseline(A, y, task)
    elif kind == "linear":
        link = "logistic" if K else "identity"
        grid = params.get("l1_ratio")
        body = fit_linear(A, yt, link, tuple(grid) if grid else None, seed=seed, n_classes=K or 2)
    elif kind == "rf":
        body = fit_forest(A, yt, forest_params(params), seed, classification=bool(K),
                          n_classes=K, jobs=jobs)
    else:
        loss = {0: "squared", 2: "logistic", 3: "multinomial"}[K]
        body = fit_gbdt(A, yt, loss, boost_params(kind, params), seed, n_classes=K)
    lvl = None if level is None else Level(level).value
    return TrainedModel(kind, task, lvl, features, body, dict(medians or {}), params, seed)


# -- task metrics and search ---------------------------------------------------

def metric_for(task) -> str:
    return "auc" if Task(task).is_classification else "mae"


def score_model(model: TrainedModel, X, y) -> float:
    """Search metric on biomass ``y``: AUC for classifiers, MAE for regressors."""
    task = model.task
    yt = labels(y, task)
    if task is Task.BINARY:
        return roc_auc(model.positive_scores(X), yt == 1)
    if task is Task.TERNARY:
        return roc_auc_ovr(model.predict(X), yt)
    return mae(model.predict(X), yt)


def search(kind: str, task, X: pd.DataFrame, y, grid: HyperGrid | None = None, seed=0, *,
           cv_seed=None, k: int = 5, jobs: int = 1, level=None, medians=None) -> SearchResult:
    """k-fold grid search on the task metric, best candidate refit on all rows.

    Classification folds are stratified by task label.  ``cv_seed`` drives
    the fold assignment and defaults to ``seed``.
    """
    task = Task(task)
    grid = grid or HyperGrid({})
    y = np.asarray(y, dtype=float)
    cols = list(X.columns)

    def fit(params, A, yy):
        return fit_model(kind, task, pd.DataFrame(A, columns=cols), yy, params, seed,
                         jobs=1 if jobs != 1 and grid.size > 1 else jobs,
                         level=level, medians=medians)

    def score(model, A, yy):
        return score_model(model, A, yy)

    strata = labels(y, task) if task.is_classification else None
    return grid_search(fit, score, grid, X.to_numpy(dtype=float), y, metric_for(task), k=k,
                       seed=seed if cv_seed is None else cv_seed, stratify=strata,
                       jobs=jobs if grid.size > 1 else 1)


__all__ = ["TrainedModel", "SchemaError", "ModelFormatError", "fit_model", "search",
           "score_model", "load_model", "from_text", "argmax_classes", "MetricError"]
