"""Named feature vectors at three levels, task labels, and dataset tables."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .ingest import N_LAYERS, OCEAN_VARS, BuoyModel, EventKind, _fmt
from .pipeline import OCEAN_SAMPLE_HOURS, EchoWindow, LabeledExample

OCEAN_NAMES = {"temp": "Temp", "chl": "Chl", "o2": "O2", "sal": "Sal",
               "thermo": "Thermo", "cur": "Cur", "ssha": "Zos"}
MODELS = [m.value for m in BuoyModel]
BASINS = ["ATL", "IND", "PAC"]
BINARY_T = 10.0
TERNARY_T = (10.0, 30.0)
CAP_T = 100.0
AUX_COLUMNS = ["aux.sum", "aux.mean"]


class FeatureError(ValueError):
    pass


class Level(str, enum.Enum):
    ECHO = "echo"
    ECHO_OCEAN = "echo_ocean"
    ALL = "all"


class Task(str, enum.Enum):
    BINARY = "binary"
    TERNARY = "ternary"
    REGRESSION = "reg"
    REGRESSION_THRESHOLD = "reg100"

    @property
    def is_classification(self) -> bool:
        return self in (Task.BINARY, Task.TERNARY)

    @property
    def n_classes(self) -> int:
        return {Task.BINARY: 2, Task.TERNARY: 3}.get(self, 0)


CLASS_NAMES = {Task.BINARY: ["absent", "present"], Task.TERNARY: ["low", "medium", "high"]}


@dataclass(frozen=True)
class FeatureVector:
    names: tuple
    values: tuple

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class TaskLabel:
    task: Task
    value: float

    @property
    def name(self):
        if self.task.is_classification:
            return CLASS_NAMES[self.task][int(self.value)]
        return self.value


def echo_names(W: int) -> list:
    return (["Agg.T"] + [f"Agg.L{k}" for k in range(1, N_LAYERS + 1)]
            + [f"Agg.H{x}" for x in range(W)] + ["N_NaN"]
            + [f"Model.{m}" for m in MODELS])


def ocean_names() -> list:
    return [f"{OCEAN_NAMES[v]}.{x}" for v in OCEAN_VARS for x in OCEAN_SAMPLE_HOURS]


def context_names() -> list:
    return (["Day", "Month", "Year", "Latitude", "Longitude"]
            + [f"Ocean.{b}" for b in BASINS] + ["SunriseHour", "SunsetHour"])


def feature_names(level, W: int) -> list:
    level = Level(level)
    names = echo_names(W)
    if level is not Level.ECHO:
        names += ocean_names()
    if level is Level.ALL:
        names += context_names()
    return names


def aggregate_matrix(window: EchoWindow) -> dict:
    """Max-aggregates of the imputed matrix; hour 0 is the one next to the anchor."""
    m = window.imputed()[:, window.anchor_order()]
    out = {"Agg.T": float(m.max()) if m.size else 0.0}
    for k, v in enumerate(m.max(axis=1), 1):
        out[f"Agg.L{k}"] = float(v)
    for x, v in enumerate(m.max(axis=0)):
        out[f"Agg.H{x}"] = float(v)
    out["N_NaN"] = float(window.n_zero_readings)
    return out


def _one_hot(prefix, options, value) -> dict:
    if value not in options:
        raise FeatureError(f"unknown {prefix} {value!r}")
    return {f"{prefix}.{o}": float(o == value) for o in options}


def raw_features(ex: LabeledExample) -> dict:
    """All-level features with missing ocean samples left as NaN."""
    f = aggregate_matrix(ex.window)
    f.update(_one_hot("Model", MODELS, ex.context.buoy_model))
    for v in OCEAN_VARS:
        for x, val in zip(OCEAN_SAMPLE_HOURS, ex.ocean[v]):
            f[f"{OCEAN_NAMES[v]}.{x}"] = float(val)
    c = ex.context
    f.update({"Day": float(c.date.day), "Month": float(c.date.month), "Year": float(c.year),
              "Latitude": c.lat, "Longitude": c.lon})
    f.update(_one_hot("Ocean", BASINS, c.ocean_basin))
    f["SunriseHour"], f["SunsetHour"] = c.sunrise_hour, c.sunset_hour
    return f


def assemble(ex: LabeledExample, level, train_medians: dict) -> FeatureVector:
    raw = raw_features(ex)
    names = feature_names(level, ex.window.W)
    vals = []
    for n in names:
        v = raw[n]
        if math.isnan(v):
            v = train_medians.get(n, 0.0)
        vals.append(float(v))
    return FeatureVector(tuple(names), tuple(vals))


def label(ex_or_y, task) -> TaskLabel:
    task = Task(task)
    y = ex_or_y.y if isinstance(ex_or_y, LabeledExample) else float(ex_or_y)
    if y < 0:
        raise ValueError("negative biomass")
    return TaskLabel(task, float(labels(np.array([y]), task)[0]))


def labels(y, task) -> np.ndarray:
    """Vectorised task labels: class index for classification, tonnes otherwise."""
    task = Task(task)
    y = np.asarray(y, dtype=float)
    if task is Task.BINARY:
        return (y >= BINARY_T).astype(int)
    if task is Task.TERNARY:
        return (y >= TERNARY_T[0]).astype(int) + (y >= TERNARY_T[1]).astype(int)
    if task is Task.REGRESSION_THRESHOLD:
        return np.minimum(y, CAP_T)
    return y.copy()


# -- dataset tables ----------------------------------------------------------

def dataset_frame(examples, W: int) -> pd.DataFrame:
    """One row per example: ids, label, kind, raw All-level features, aux sums."""
    cols = ["event_id", "y", "kind"] + AUX_COLUMNS + feature_names(Level.ALL, W)
    rows = []
    for ex in examples:
        if ex.window.W != W:
            raise FeatureError(f"example {ex.event_id} has W={ex.window.W}, expected {W}")
        f = raw_features(ex)
        m = ex.window.imputed()
        f["aux.sum"] = float(m.sum())
        f["aux.mean"] = float(m.mean())
        f.update(event_id=ex.event_id, y=ex.y, kind=ex.kind.value)
        rows.append([f[c] for c in cols])
    return pd.DataFrame(rows, columns=cols)


def window_size(df: pd.DataFrame) -> int:
    return sum(1 for c in df.columns if c.startswith("Agg.H"))


def compute_medians(train: pd.DataFrame, level=Level.ALL) -> dict:
    names = feature_names(level, window_size(train))
    med = {}
    for n in names:
        col = train[n].to_numpy(dtype=float)
        if np.isnan(col).any():
            fin = col[~np.isnan(col)]
            med[n] = float(np.median(fin)) if fin.size else 0.0
    return med


def design_matrix(df: pd.DataFrame, level, medians: dict) -> pd.DataFrame:
    """Feature columns for ``level`` with NaNs replaced by training medians."""
    names = feature_names(level, window_size(df))
    missing = [n for n in names if n not in df.columns]
    if missing:
        raise FeatureError(f"dataset lacks columns for level {Level(level).value}: {missing[:5]}")
    X = df[names].astype(float)
    fill = {n: medians.get(n, 0.0) for n in names if X[n].isna().any()}
    return X.fillna(fill) if fill else X


def write_dataset(df: pd.DataFrame, path):
    """CSV with repr floats (round-trip exact) and empty cells for NaN."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(df.columns))
        for row in df.itertuples(index=False):
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def read_dataset(path) -> pd.DataFrame:
    text_cols = {"event_id": str, "kind": str, "split": str}
    df = pd.read_csv(path, dtype=text_cols, keep_default_na=False, na_values=[""],
                     float_precision="round_trip")
    return df


__all__ = [
    "FeatureVector", "TaskLabel", "Level", "Task", "aggregate_matrix", "assemble", "label",
    "labels", "feature_names", "dataset_frame", "design_matrix", "compute_medians",
    "write_dataset", "read_dataset", "EventKind",
]
