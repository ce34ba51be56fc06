from datetime import datetime

import numpy as np
import pytest

from tunai.geo import solar_hour_of_day
from tunai.ingest import read_echograms, read_logbook
from tunai.pipeline import build_dataset
from tunai.synth import SynthConfig, colonization, diurnal_gate, generate, validate


@pytest.fixture(scope="module")
def world():
    return generate(SynthConfig(seed=4, n_buoys=120, days=30))


def test_same_config_gives_identical_files(tmp_path):
    cfg = SynthConfig(seed=9, n_buoys=20, days=14)
    a = generate(cfg).write(tmp_path / "a")
    b = generate(cfg).write(tmp_path / "b")
    for k in a:
        assert open(a[k], "rb").read() == open(b[k], "rb").read(), k


def test_different_seed_differs(tmp_path):
    a = generate(SynthConfig(seed=1, n_buoys=20, days=14)).write(tmp_path / "a")
    b = generate(SynthConfig(seed=2, n_buoys=20, days=14)).write(tmp_path / "b")
    assert open(a["echo"], "rb").read() != open(b["echo"], "rb").read()


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(set_rate=1.5)
    with pytest.raises(ValueError):
        SynthConfig(days=5)
    with pytest.raises(ValueError):
        SynthConfig(coupling={"depth": 1.0})


def test_emitted_rows_are_uncensored(world):
    for tr in world.tracks.values():
        if len(tr):
            assert np.all(tr.layers.sum(axis=1) >= 1.0)


def test_night_hours_below_threshold_are_absent(world):
    n_checked = 0
    for buoy, hrs in world.truth_hours.items():
        b = world.truth_b[buoy]
        emitted = set(world.tracks[buoy].hours.tolist())
        for h, v in zip(hrs[b < 1.0][:50], b[b < 1.0][:50]):
            assert int(h) not in emitted
            n_checked += 1
    assert n_checked > 0


def test_validation_passes_on_default_world(world):
    rep = validate(world)
    assert rep.ok, rep.failures
    assert rep.stats["day_mean_b"] > rep.stats["night_mean_b"]
    assert rep.stats["catch_mean"] > rep.stats["catch_median"]
    assert abs(rep.stats["censored_frac"] - rep.stats["censored_expected"]) <= 0.02


def test_validation_reports_failures(world):
    rep = validate(world, median_target=300.0)
    assert not rep.ok
    assert any("median" in f for f in rep.failures)


def test_ground_truth_labels_agree_with_logbook(world):
    for ev in world.events:
        y, _ = world.event_truth[ev.event_id]
        assert y == (ev.catch_t if ev.is_set else 0.0)


def test_written_files_read_back(world, tmp_path):
    paths = world.write(tmp_path)
    events, rej = read_logbook(paths["logbook"])
    assert rej == [] and len(events) == len(world.events)
    recs, rej = read_echograms(paths["echo"])
    assert rej == [] and len(recs) == sum(len(t) for t in world.tracks.values())
    header = open(paths["ground_truth_events"]).readline().strip()
    assert header == "event_id,rule_violation,y"


def test_injected_violations_are_recovered(world):
    _, rep = build_dataset(world.events, world.tracks, world.ocean, world.bathy, 72)
    inj = world.injected_counts()
    assert [rep.counts[r] for r in ("id_mismatch", "on_land", "shallow", "speeding")] == \
        [inj[1], inj[3], inj[4], inj[5]]
    assert sum(inj.values()) > 0


def test_zero_violation_rate_drops_nothing():
    w = generate(SynthConfig(seed=3, n_buoys=40, days=16, violation_rates={r: 0.0 for r in (1, 3, 4, 5)}))
    _, rep = build_dataset(w.events, w.tracks, w.ocean, w.bathy, 72)
    assert sum(rep.counts.values()) == 0


def test_building_blocks():
    assert colonization(0.0, 0.35, 8.0) < colonization(20.0, 0.35, 8.0)
    assert diurnal_gate(12.0, 0.08) > diurnal_gate(0.0, 0.08)
    assert solar_hour_of_day(0.0, datetime(2019, 3, 1, 12)) == 12.0
