import math
from datetime import date, datetime, timedelta
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import almanac_elevation, almanac_rise_set, cosine_law_nm
from tunai.geo import (
    DomainError,
    GeoPoint,
    Polar,
    haversine_nm,
    solar_day,
    speed_knots,
    sun_inclination,
    to_solar_time,
    track_speeds,
)

lats = st.floats(-89.9, 89.9)
lons = st.floats(-180.0, 179.999)


def rec(lat, lon, t, buoy="B1"):
    return SimpleNamespace(buoy_id=buoy, position=GeoPoint(lat, lon), t_utc=t)


def test_geopoint_normalizes_longitude():
    assert GeoPoint(0, 190).lon == pytest.approx(-170)
    assert GeoPoint(0, 180).lon == -180.0
    with pytest.raises(ValueError):
        GeoPoint(91, 0)


def test_inclination_equinox_noon_near_zenith():
    # true value is ~88.2 deg: declination +0.2 and equation of time -7 min
    elev = sun_inclination(GeoPoint(0, 0), datetime(2019, 3, 21, 12))
    assert 88.0 < elev <= 90.0


def test_inclination_equinox_midnight_near_nadir():
    elev = sun_inclination(GeoPoint(0, 0), datetime(2019, 3, 21, 0))
    assert elev == pytest.approx(-90.0, abs=2.0)


def test_inclination_against_almanac_oracle():
    ours = sun_inclination(GeoPoint(43.0, -2.9), datetime(2019, 6, 21, 12))
    ref = almanac_elevation(43.0, -2.9, datetime(2019, 6, 21, 12))
    assert ours == pytest.approx(ref, abs=0.3)


def test_inclination_rejects_out_of_range_years():
    with pytest.raises(DomainError):
        sun_inclination(GeoPoint(0, 0), datetime(1900, 1, 1))
    with pytest.raises(DomainError):
        solar_day(GeoPoint(0, 0), date(2150, 1, 1))


def test_inclination_decreases_from_noon_to_midnight():
    p = GeoPoint(-7.0, 55.0)
    sd = solar_day(p, date(2019, 5, 2))
    vals = [sun_inclination(p, sd.noon_utc + timedelta(minutes=20 * k)) for k in range(1, 36)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_equator_equinox_day_length():
    sd = solar_day(GeoPoint(0, 0), date(2019, 3, 21))
    six, eighteen = datetime(2019, 3, 21, 6), datetime(2019, 3, 21, 18)
    assert abs((sd.sunrise_utc - six).total_seconds()) < 600
    # equation of time (-7.4 min) plus refraction put sunset at ~18:10:29
    assert abs((sd.sunset_utc - eighteen).total_seconds()) < 660
    rise, sset = almanac_rise_set(0.0, 0.0, date(2019, 3, 21))
    assert abs((sd.sunset_utc - sset).total_seconds()) < 180


def test_polar_day():
    sd = solar_day(GeoPoint(85, 0), date(2019, 6, 21))
    assert sd.sunset_utc is Polar.DAY and not sd.has_sunset


def test_polar_night():
    sd = solar_day(GeoPoint(85, 0), date(2019, 12, 21))
    assert sd.sunrise_utc is Polar.NIGHT


def test_mauritius_against_oracle():
    sd = solar_day(GeoPoint(-20.0, 57.5), date(2019, 1, 15))
    rise, sset = almanac_rise_set(-20.0, 57.5, date(2019, 1, 15))
    assert abs((sd.sunrise_utc - rise).total_seconds()) < 180
    assert abs((sd.sunset_utc - sset).total_seconds()) < 180


@settings(max_examples=60, deadline=None)
@given(st.floats(-65, 65), lons, st.integers(0, 3000))
def test_solar_day_ordering_and_threshold(lat, lon, offset):
    p = GeoPoint(lat, lon)
    sd = solar_day(p, date(2016, 1, 1) + timedelta(days=offset))
    assert sd.sunrise_utc < sd.noon_utc < sd.sunset_utc
    assert sd.sunset_utc - sd.sunrise_utc < timedelta(hours=24)
    for t in (sd.sunrise_utc, sd.sunset_utc):
        assert -1.5 <= sun_inclination(p, t) <= 0.2


@settings(max_examples=40, deadline=None)
@given(st.floats(-59, 59), lons, st.integers(0, 3000))
def test_sunrise_changes_slowly_day_to_day(lat, lon, offset):
    p = GeoPoint(lat, lon)
    d = date(2016, 1, 1) + timedelta(days=offset)
    a, b = solar_day(p, d), solar_day(p, d + timedelta(days=1))
    drift = (b.sunrise_utc - a.sunrise_utc) - timedelta(days=1)
    assert abs(drift) < timedelta(minutes=30)


def test_solar_time_examples():
    noon = datetime(2019, 3, 1, 12)
    assert to_solar_time(0.0, noon) == noon
    assert to_solar_time(-45.0, noon) == datetime(2019, 3, 1, 9)
    near = to_solar_time(180 - 1e-9, noon)
    assert abs(near - datetime(2019, 3, 2, 0)) < timedelta(seconds=1)


@given(lons, st.integers(0, 10**6))
def test_solar_offset_constant(lon, minutes):
    t0 = datetime(2019, 1, 1)
    t1 = t0 + timedelta(minutes=minutes)
    assert to_solar_time(lon, t0) - t0 == to_solar_time(lon, t1) - t1


def test_haversine_identity_and_half_circumference():
    a = GeoPoint(12.3, -45.6)
    assert haversine_nm(a, a) == 0.0
    half = math.pi * 6371008.8 / 1852.0  # 10807.297...
    assert haversine_nm(GeoPoint(0, 0), GeoPoint(0, 180)) == pytest.approx(half, rel=1e-12)


def test_haversine_vs_cosine_law():
    ours = haversine_nm(GeoPoint(10.0, -20.0), GeoPoint(10.5, -20.5))
    assert ours == pytest.approx(cosine_law_nm(10.0, -20.0, 10.5, -20.5), rel=1e-6)


@settings(max_examples=200)
@given(lats, lons, lats, lons, lats, lons)
def test_haversine_is_a_metric(la1, lo1, la2, lo2, la3, lo3):
    a, b, c = GeoPoint(la1, lo1), GeoPoint(la2, lo2), GeoPoint(la3, lo3)
    ab, ba = haversine_nm(a, b), haversine_nm(b, a)
    assert ab == pytest.approx(ba, abs=1e-9)
    assert ab >= 0
    assert haversine_nm(a, c) <= ab + haversine_nm(b, c) + 1e-6


def test_speed_examples():
    t = datetime(2019, 1, 1, 3)
    assert speed_knots(rec(1, 1, t), rec(1, 1, t + timedelta(hours=1))) == 0.0
    three_nm_lat = 3.0 * 1852.0 / 6371008.8 * 180 / math.pi
    assert speed_knots(rec(0, 5, t), rec(three_nm_lat, 5, t + timedelta(hours=1))) == pytest.approx(3.0)
    one_deg = speed_knots(rec(0, 5, t), rec(1, 5, t + timedelta(hours=1)))
    assert one_deg == pytest.approx(60.04, abs=0.005)


def test_speed_errors():
    t = datetime(2019, 1, 1, 3)
    with pytest.raises(DomainError):
        speed_knots(rec(0, 0, t), rec(0, 0, t))
    with pytest.raises(DomainError):
        speed_knots(rec(0, 0, t), rec(0, 0, t + timedelta(hours=1), buoy="B2"))


def test_track_speeds_match_pairwise():
    lat, lon, hrs = [0, 0.01, 0.05], [10, 10.02, 10.02], [0, 1, 3]
    got = track_speeds(lat, lon, hrs)
    t0 = datetime(2019, 1, 1)
    recs = [rec(a, b, t0 + timedelta(hours=h)) for a, b, h in zip(lat, lon, hrs)]
    want = [speed_knots(p, q) for p, q in zip(recs, recs[1:])]
    assert got == pytest.approx(want, rel=1e-12)
