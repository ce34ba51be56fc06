from datetime import date

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_force_max
from tunai.features import (
    AUX_COLUMNS,
    FeatureError,
    Level,
    Task,
    aggregate_matrix,
    assemble,
    compute_medians,
    dataset_frame,
    design_matrix,
    feature_names,
    label,
    labels,
    raw_features,
    read_dataset,
    write_dataset,
)
from tunai.geo import solar_day, GeoPoint
from tunai.ingest import EventKind, OCEAN_VARS
from tunai.pipeline import Context, EchoWindow, LabeledExample


def make_window(matrix, kind=EventKind.SET):
    W = matrix.shape[1]
    present = ~np.isnan(matrix).all(axis=0)
    sd = solar_day(GeoPoint(0.0, 0.0), date(2019, 4, 9))
    return EchoWindow("E1", kind, W, sd.sunset_utc, sd, 0.0, np.arange(W, dtype=np.int64),
                      matrix, np.where(present, np.arange(W), -1), np.zeros(W), np.zeros(W))


def make_example(matrix, kind=EventKind.SET, y=20.0, ocean=None, model="ISL+"):
    if ocean is None:
        ocean = {v: np.array([1.0, 2.0, 3.0, 4.0]) for v in OCEAN_VARS}
    ctx = Context(date(2019, 4, 10), 2019, 1.5, 55.0, "IND", 6.1, 18.2, model)
    return LabeledExample("E1", kind, make_window(matrix, kind), ocean, ctx, y)


def test_all_missing_window():
    agg = aggregate_matrix(make_window(np.full((10, 72), np.nan)))
    assert agg["N_NaN"] == 72
    assert all(v == 0 for k, v in agg.items() if k != "N_NaN")


def test_single_cell():
    m = np.zeros((10, 72))
    # hour 10 from the anchor is column W-1-10 for a set
    m[2, 72 - 1 - 10] = 5.0
    agg = aggregate_matrix(make_window(m))
    assert agg["Agg.T"] == 5.0 and agg["Agg.L3"] == 5.0 and agg["Agg.H10"] == 5.0
    others = {k: v for k, v in agg.items() if k not in ("Agg.T", "Agg.L3", "Agg.H10")}
    assert all(v == 0 for v in others.values())


def test_deployment_hour_zero_is_first_column():
    m = np.zeros((10, 24))
    m[0, 0] = 7.0
    assert aggregate_matrix(make_window(m, EventKind.DEPLOYMENT))["Agg.H0"] == 7.0


def test_aggregates_match_brute_force_on_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(200):
        W = int(rng.choice([24, 48, 72]))
        m = rng.gamma(1.0, 5.0, size=(10, W))
        m[:, rng.random(W) < 0.3] = np.nan
        agg = aggregate_matrix(make_window(m))
        total, rows, cols = brute_force_max(np.nan_to_num(m[:, ::-1]).tolist())
        assert agg["Agg.T"] == total
        for y in range(10):
            assert agg[f"Agg.L{y + 1}"] == rows[y]
        for x in range(W):
            assert agg[f"Agg.H{x}"] == cols[x]


@settings(max_examples=60, deadline=None)
@given(arrays(float, (10, 24), elements=st.floats(0, 1e4)))
def test_total_equals_max_of_layer_and_hour_aggregates(m):
    agg = aggregate_matrix(make_window(m))
    layers = max(agg[f"Agg.L{k}"] for k in range(1, 11))
    hours = max(agg[f"Agg.H{x}"] for x in range(24))
    assert agg["Agg.T"] == layers == hours


def test_feature_counts():
    assert len(feature_names(Level.ECHO, 72)) == 87
    assert len(feature_names(Level.ECHO_OCEAN, 72)) == 87 + 28
    assert len(feature_names(Level.ALL, 72)) == 87 + 28 + 10
    assert len(feature_names(Level.ECHO, 24)) == 39


def test_names_are_deterministic():
    assert feature_names("all", 48) == feature_names(Level.ALL, 48)
    assert feature_names(Level.ECHO_OCEAN, 24)[-1] == "Zos.71"


def test_assemble_is_pure_and_imputes_with_medians():
    ocean = {v: np.array([1.0, np.nan, 3.0, 4.0]) for v in OCEAN_VARS}
    ex = make_example(np.ones((10, 72)), ocean=ocean)
    med = {"Temp.23": 99.0}
    a = assemble(ex, Level.ALL, med)
    b = assemble(ex, Level.ALL, med)
    assert a == b
    d = a.as_dict()
    assert d["Temp.23"] == 99.0
    assert d["Chl.23"] == 0.0  # no median known
    assert all(np.isfinite(a.values))
    assert d["Model.ISL+"] + d["Model.SLX+"] + d["Model.ISD+"] == 1.0
    assert d["Ocean.ATL"] + d["Ocean.IND"] + d["Ocean.PAC"] == 1.0
    assert d["Day"] == 10 and d["Month"] == 4 and d["Year"] == 2019


def test_unknown_buoy_model_rejected():
    ex = make_example(np.ones((10, 24)), model="XYZ")
    with pytest.raises(FeatureError):
        raw_features(ex)


def test_label_thresholds():
    assert label(9.9, "binary").name == "absent"
    assert label(10.0, "binary").name == "present"
    assert label(9.99, "ternary").name == "low"
    assert label(10.0, "ternary").name == "medium"
    assert label(30.0, "ternary").name == "high"
    assert label(150.0, "reg100").value == 100.0
    assert label(150.0, "reg").value == 150.0
    with pytest.raises(ValueError):
        label(-1.0, "reg")


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 500), st.floats(0, 500), st.sampled_from(list(Task)))
def test_labels_monotone(a, b, task):
    lo, hi = sorted((a, b))
    la, lb = labels([lo, hi], task)
    assert la <= lb
    if task is Task.REGRESSION_THRESHOLD:
        assert lb <= 100.0


def test_dataset_round_trip(tmp_path):
    m = np.full((10, 24), np.nan)
    m[:, 3] = np.linspace(0.1, 1.0, 10) / 3.0
    ocean = {v: np.array([0.1, np.nan, 1 / 3, 2.5]) for v in OCEAN_VARS}
    ex = make_example(m, ocean=ocean)
    df = dataset_frame([ex], 24)
    assert list(df.columns[:5]) == ["event_id", "y", "kind"] + AUX_COLUMNS
    write_dataset(df, tmp_path / "d.csv")
    back = read_dataset(tmp_path / "d.csv")
    assert list(back.columns) == list(df.columns)
    num = [c for c in df.columns if c not in ("event_id", "kind")]
    a, b = df[num].to_numpy(float), back[num].to_numpy(float)
    assert np.array_equal(np.isnan(a), np.isnan(b))
    assert np.array_equal(a[~np.isnan(a)], b[~np.isnan(b)])
    assert back["event_id"][0] == "E1"


def test_medians_come_from_training_rows_only():
    df = pd.DataFrame({c: [0.0] * 4 for c in feature_names(Level.ALL, 24)})
    df["Temp.0"] = [1.0, np.nan, 3.0, 100.0]
    train = df.iloc[:3]
    med = compute_medians(train, Level.ALL)
    assert med == {"Temp.0": 2.0}
    X = design_matrix(df, Level.ECHO_OCEAN, med)
    assert X["Temp.0"].tolist() == [1.0, 2.0, 3.0, 100.0]
    with pytest.raises(FeatureError):
        design_matrix(df.drop(columns=["Zos.71"]), Level.ALL, med)
