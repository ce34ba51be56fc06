"""Aggregation-rule baseline: Sum, Mean or Max of the imputed echo matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..evaluation import ConfusionMatrix, f1, mae
from ..features import Task, labels

# dataset column holding each rule's statistic
RULE_COLUMNS = {"Max": "Agg.T", "Sum": "aux.sum", "Mean": "aux.mean"}
# evaluation order; Max first so that ties keep it
RULES = ("Max", "Sum", "Mean")


@dataclass
class BaselineModel:
    rule: str
    task: Task

    @property
    def column(self) -> str:
        return RULE_COLUMNS[self.rule]

    def statistic(self, X) -> np.ndarray:
        """``X`` holds the three rule columns in RULE_COLUMNS order."""
        X = np.asarray(X, dtype=float).reshape(-1, len(RULE_COLUMNS))
        return X[:, list(RULE_COLUMNS).index(self.rule)]

    def predict(self, X) -> np.ndarray:
        # class index for classification; reg100 caps at 100, reg is the identity
        return labels(self.statistic(X), self.task)

    def scores(self, X) -> np.ndarray:
        """One-hot class scores from the thresholded statistic (for AUC)."""
        cls = self.predict(X).astype(int)
        out = np.zeros((len(cls), self.task.n_classes))
        out[np.arange(len(cls)), cls] = 1.0
        if self.task is Task.BINARY:
            # the raw statistic ranks better than a hard label and keeps the same argmax
            s = self.statistic(X)
            out[:, 1] = s
            out[:, 0] = 10.0 - (s == 10.0) * 1e-9
        return out

    def to_dict(self) -> dict:
        return {"rule": self.rule, "task": self.task.value}

    @classmethod
    def from_dict(cls, d) -> "BaselineModel":
        return cls(d["rule"], Task(d["task"]))


def rule_score(pred, y_task, task: Task) -> float:
    """Train-time selection metric; larger is better."""
    if task is Task.BINARY:
        return f1(ConfusionMatrix.from_labels(y_task, pred, 2), "binary")
    if task is Task.TERNARY:
        return f1(ConfusionMatrix.from_labels(y_task, pred, 3), "weighted")
    return -mae(pred, y_task)


def fit_baseline(X, y, task) -> BaselineModel:
    """Pick the rule that scores best on the training rows; ties keep Max.

    ``y`` is biomass in tonnes; classification rules are judged by F1
    (weighted for ternary) and regression rules by MAE.
    """
    task = Task(task)
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("baseline needs a non-empty training set")
    y_task = labels(y, task)
    best, best_score = None, -np.inf
    for rule in RULES:
        m = BaselineModel(rule, task)
        s = rule_score(m.predict(X), y_task, task)
        if s > best_score:
            best, best_score = m, s
    return best
