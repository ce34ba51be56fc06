import math
from dataclasses import replace
from datetime import date, datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tunai import geo
from tunai.geo import GeoPoint
from tunai.ingest import N_LAYERS, OCEAN_VARS, BathyGrid, EchoRecord, Event, OceanGrid, group_tracks
from tunai.pipeline import (
    DROP_REASONS,
    CleanReport,
    Skip,
    attach_ocean,
    build_dataset,
    clean,
    extract_window,
    link_events,
    ocean_basin,
    overlaps_event_day,
)
from tunai.synth import SynthConfig, generate

LAT, LON = 0.0, 55.0


def hourly_records(buoy, start, n, lat=LAT, lon=LON, value=None, dlat=0.0):
    """n hourly records from ``start``; layer 1 carries the epoch hour for identification."""
    out = []
    for k in range(n):
        t = start + timedelta(hours=k)
        h = geo.epoch_hours(t)
        layers = [float(h % 1000) + 1.0 if value is None else value] + [1.0] * (N_LAYERS - 1)
        out.append(EchoRecord(buoy, t, GeoPoint(lat + dlat * k, lon), tuple(layers)))
    return out


def set_event(eid="E1", buoy="B1", day=date(2019, 4, 10), catch=25.0, lat=LAT, lon=LON):
    return Event(eid, buoy, "ISL+", "SET", day, GeoPoint(lat, lon), catch)


def deploy_event(eid="D1", buoy="B1", day=date(2019, 4, 10), lat=LAT, lon=LON):
    return Event(eid, buoy, "SLX+", "DEPLOY", day, GeoPoint(lat, lon), None)


def deep_bathy(depth=4000.0):
    lats = np.arange(-20.0, 20.01, 0.5)
    lons = np.arange(40.0, 70.01, 0.5)
    return BathyGrid(lats, lons, np.full((lats.size, lons.size), depth), 0.5, 0.5)


def flat_ocean(days, const_in_time=True):
    lats = np.arange(-20.0, 20.01, 1.0)
    lons = np.arange(40.0, 70.01, 1.0)
    vals = {}
    for k, v in enumerate(OCEAN_VARS):
        base = (k + 1) * 100 + lats[:, None] * 1.0 + lons[None, :] * 0.01
        cube = np.repeat(base[None], len(days), axis=0)
        if not const_in_time:
            cube = cube + np.arange(len(days))[:, None, None] * 1000
        vals[v] = cube
    return OceanGrid(lats, lons, list(days), vals, 1.0, 1.0)


def tracks_of(records):
    return group_tracks(records)


# -- linking -----------------------------------------------------------------

def test_link_events_matched_and_unmatched():
    recs = hourly_records("B1", datetime(2019, 4, 5), 10)
    linked, unmatched = link_events([set_event(), set_event("E2", "B9")], recs)
    assert list(linked) == ["E1"]
    assert unmatched == ["E2"]


# -- windows -----------------------------------------------------------------

def test_set_window_ends_at_sunset_of_previous_day():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 5), 24 * 6)
    tr = tracks_of(recs)["B1"]
    w = extract_window(ev, tr, 72)
    sunset = geo.solar_day(ev.position, ev.date - timedelta(days=1)).sunset_utc
    last = math.floor(geo.epoch_hours(sunset))
    assert w.hours[-1] == last
    assert w.end_utc == sunset
    assert w.matrix.shape == (N_LAYERS, 72)
    assert w.matrix[0, -1] == float(last % 1000) + 1.0
    assert w.n_zero_readings == 0


def test_deployment_window_follows_sunset_of_same_day():
    ev = deploy_event()
    recs = hourly_records("B1", datetime(2019, 4, 10), 24 * 5)
    w = extract_window(ev, tracks_of(recs)["B1"], 48)
    sunset = geo.solar_day(ev.position, ev.date).sunset_utc
    assert w.hours[0] == math.floor(geo.epoch_hours(sunset)) + 1
    assert len(w.hours) == 48


def test_live_buoy_without_records_in_span_gives_all_missing_window():
    ev = deploy_event(day=date(2019, 4, 10))
    recs = hourly_records("B1", datetime(2019, 4, 7), 24)  # transmitted two days before
    w = extract_window(ev, tracks_of(recs)["B1"], 72)
    assert not isinstance(w, Skip)
    assert w.n_zero_readings == 72
    assert np.isnan(w.matrix).all()


def test_dead_buoy_is_skipped():
    ev = deploy_event(day=date(2019, 4, 20))
    recs = hourly_records("B1", datetime(2019, 4, 1), 24)
    w = extract_window(ev, tracks_of(recs)["B1"], 72)
    assert w == Skip("no_records")
    rep = clean([ev], {"D1": w}, recs, None)
    assert rep.counts["insufficient_coverage"] == 1


def test_polar_day_is_skipped():
    ev = set_event(day=date(2019, 6, 21), lat=80.0, lon=10.0)
    recs = hourly_records("B1", datetime(2019, 6, 15), 24 * 5, lat=80.0, lon=10.0)
    assert extract_window(ev, tracks_of(recs)["B1"], 24) == Skip("no_sunset")


def test_bad_window_size_rejected():
    recs = hourly_records("B1", datetime(2019, 4, 5), 24)
    with pytest.raises(ValueError):
        extract_window(set_event(), tracks_of(recs)["B1"], 36)


def test_duplicate_hour_keeps_larger_layer_sum():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 5), 24 * 6, value=2.0)
    w0 = extract_window(ev, tracks_of(recs)["B1"], 24)
    t = geo.from_epoch_hours(int(w0.hours[5]))
    extra = EchoRecord("B1", t + timedelta(minutes=10), GeoPoint(LAT, LON), tuple([9.0] * N_LAYERS))
    w = extract_window(ev, tracks_of(recs + [extra])["B1"], 24)
    assert w.matrix[0, 5] == 9.0


# -- cleaning ----------------------------------------------------------------

def windows_for(events, recs, W=72):
    tr = tracks_of(recs)
    linked, _ = link_events(events, tr)
    return {e.event_id: extract_window(e, linked[e.event_id], W) for e in events if e.event_id in linked}


def test_clean_track_survives():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8)
    rep = clean([ev], windows_for([ev], recs), recs, deep_bathy())
    assert rep.survivors == ["E1"]
    assert sum(rep.counts.values()) == 0


def test_speeding_buoy_dropped():
    ev = set_event()
    # 10 NM per hour northward: 1/6 degree of latitude
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8, dlat=10.0 / 60.0)
    rep = clean([ev], windows_for([ev], recs), recs, deep_bathy())
    assert rep.dropped == {"E1": "speeding"}


def test_shallow_record_dropped():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8)
    bathy = deep_bathy()
    w = windows_for([ev], recs)["E1"]
    # one in-window record moved onto a 150 m bank
    i = int(w.rec_index[30])
    bathy.depth[bathy.lats.searchsorted(5.0), bathy.lons.searchsorted(60.0)] = 150.0
    recs[i] = EchoRecord("B1", recs[i].t_utc, GeoPoint(5.0, 60.0), recs[i].layers)
    rep = clean([ev], windows_for([ev], recs), recs, bathy)
    assert rep.dropped == {"E1": "shallow"}


def test_event_on_land_dropped():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8)
    bathy = deep_bathy()
    bathy.depth[bathy.lats.searchsorted(LAT), bathy.lons.searchsorted(LON)] = -5.0
    rep = clean([ev], windows_for([ev], recs), recs, bathy)
    assert rep.dropped == {"E1": "on_land"}


def test_missing_bathymetry_keeps_event():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8)
    bathy = deep_bathy(np.nan)
    assert clean([ev], windows_for([ev], recs), recs, bathy).survivors == ["E1"]


def test_unmatched_id_dropped_first():
    ev = set_event(buoy="B7")
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8)
    rep = clean([ev], windows_for([ev], recs), recs, deep_bathy())
    assert rep.dropped == {"E1": "id_mismatch"}


def test_rule_order_shallow_before_speeding():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8, dlat=10.0 / 60.0)
    rep = clean([ev], windows_for([ev], recs), recs, deep_bathy(100.0))
    assert rep.dropped == {"E1": "shallow"}


def test_overlap_detects_window_reaching_event_day():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8)
    w = windows_for([ev], recs)["E1"]
    assert not overlaps_event_day(ev, w)
    shifted = replace(w, hours=w.hours + 12)
    assert overlaps_event_day(ev, shifted)
    rep = clean([ev], {"E1": shifted}, recs, deep_bathy())
    assert rep.dropped == {"E1": "overlap"}


def test_deployment_overlap_when_window_starts_before_sunset():
    ev = deploy_event()
    recs = hourly_records("B1", datetime(2019, 4, 9), 24 * 5)
    w = windows_for([ev], recs)["D1"]
    assert not overlaps_event_day(ev, w)
    assert overlaps_event_day(ev, replace(w, hours=w.hours - 3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(DROP_REASONS + ("ok",)), st.integers(0, 2)), max_size=40))
def test_report_counts_add_up_and_merge_associatively(items):
    parts = [CleanReport(), CleanReport(), CleanReport()]
    for i, (reason, which) in enumerate(items):
        eid = f"E{i:03d}"
        if reason == "ok":
            parts[which].survivors.append(eid)
        else:
            parts[which].drop(eid, reason)
    a, b, c = parts
    left, right = (a + b) + c, a + (b + c)
    assert left.counts == right.counts
    assert left.survivors == right.survivors
    assert left.n_input == len(items)
    assert sum(left.counts.values()) + len(left.survivors) == len(items)


# -- oceanography ------------------------------------------------------------

def test_stationary_buoy_on_node_gives_identical_samples():
    ev = set_event(lat=2.0, lon=56.0)
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8, lat=2.0, lon=56.0)
    w = windows_for([ev], recs)["E1"]
    grid = flat_ocean([date(2019, 4, 1) + timedelta(days=k) for k in range(15)])
    ocean, flagged = attach_ocean(w, grid, ev)
    assert not flagged
    for v in OCEAN_VARS:
        assert np.all(ocean[v] == ocean[v][0])
        assert not np.isnan(ocean[v]).any()


def test_short_window_marks_far_samples_missing():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8)
    w = windows_for([ev], recs, W=24)["E1"]
    grid = flat_ocean([date(2019, 4, 1) + timedelta(days=k) for k in range(15)])
    ocean, _ = attach_ocean(w, grid, ev)
    for v in OCEAN_VARS:
        assert not np.isnan(ocean[v][:2]).any()
        assert np.isnan(ocean[v][2:]).all()


def test_moving_buoy_matches_per_hour_lookup():
    ev = set_event(lat=-3.0, lon=50.0)
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8, lat=-3.0, lon=50.0, dlat=0.05)
    w = windows_for([ev], recs)["E1"]
    days = [date(2019, 4, 1) + timedelta(days=k) for k in range(15)]
    grid = flat_ocean(days, const_in_time=False)
    ocean, _ = attach_ocean(w, grid, ev)
    for k, x in enumerate((0, 23, 47, 71)):
        col = w.W - 1 - x
        lat, lon = w.lat[col], w.lon[col]
        i = int(np.argmin(np.abs(grid.lats - lat)))
        j = int(np.argmin(np.abs(grid.lons - lon)))
        d = days.index(geo.from_epoch_hours(int(w.hours[col])).date())
        for v in OCEAN_VARS:
            assert ocean[v][k] == grid.values[v][d, i, j]


def test_no_grid_flags_example():
    ev = set_event()
    recs = hourly_records("B1", datetime(2019, 4, 3), 24 * 8)
    _, flagged = attach_ocean(windows_for([ev], recs)["E1"], None, ev)
    assert flagged


def test_ocean_basin_partition():
    assert ocean_basin(0.0, -20.0) == "ATL"
    assert ocean_basin(0.0, 60.0) == "IND"
    assert ocean_basin(35.0, 60.0) == "PAC"
    assert ocean_basin(0.0, 150.0) == "PAC"


# -- whole pipeline ----------------------------------------------------------

def test_empty_logbook():
    examples, rep = build_dataset([], [], None, None, 72)
    assert examples == []
    assert rep.n_input == 0


@pytest.fixture(scope="module")
def world():
    return generate(SynthConfig(seed=11, n_buoys=80, days=24))


@pytest.fixture(scope="module")
def built(world):
    return build_dataset(world.events, world.tracks, world.ocean, world.bathy, 72)


def test_drop_counts_equal_injected(world, built):
    _, rep = built
    inj = world.injected_counts()
    assert rep.counts["id_mismatch"] == inj[1]
    assert rep.counts["on_land"] == inj[3]
    assert rep.counts["shallow"] == inj[4]
    assert rep.counts["speeding"] == inj[5]
    assert rep.counts["overlap"] == 0
    for eid, reason in rep.dropped.items():
        assert world.event_truth[eid][1] != 0, (eid, reason)


def test_windows_match_ground_truth(world, built):
    examples, _ = built
    for ex in examples:
        ev_buoy = next(e.buoy_id for e in world.events if e.event_id == ex.event_id)
        w = ex.window
        censored = 0
        for c, h in enumerate(w.hours):
            truth = world.truth_column(ev_buoy, int(h))
            if w.present[c]:
                assert np.array_equal(w.matrix[:, c], truth[1])
            else:
                assert truth is None or truth[0] < 1.0
                censored += 1
        assert w.n_zero_readings == censored


def test_labels_and_window_invariants(world, built):
    examples, _ = built
    catches = {e.event_id: e.catch_t for e in world.events}
    by_id = {e.event_id: e for e in world.events}
    assert [e.event_id for e in examples] == sorted(e.event_id for e in examples)
    for ex in examples:
        w = ex.window
        assert w.n_zero_readings + int(np.count_nonzero(w.present)) == w.W
        assert not overlaps_event_day(by_id[ex.event_id], w)
        if ex.kind.value == "DEPLOY":
            assert ex.y == 0.0
        else:
            assert ex.y == catches[ex.event_id]


def test_build_is_deterministic(world, built, tmp_path):
    from tunai.features import dataset_frame, write_dataset
    again, _ = build_dataset(world.events, world.tracks, world.ocean, world.bathy, 72)
    write_dataset(dataset_frame(built[0], 72), tmp_path / "a.csv")
    write_dataset(dataset_frame(again, 72), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
