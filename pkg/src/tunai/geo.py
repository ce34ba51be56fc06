"""Solar geometry and great-circle distances.

Solar position follows the NOAA low-accuracy algorithm (Julian-century
polynomials for the solar declination and the equation of time).  Naive
``datetime`` objects are interpreted as UTC throughout.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone

import numpy as np

EARTH_RADIUS_M = 6371008.8
METERS_PER_NM = 1852.0
SUNRISE_ALTITUDE_DEG = -0.833

_EPOCH = datetime(1970, 1, 1)
_MIN_YEAR, _MAX_YEAR = 1950, 2100


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


class Polar(enum.Enum):
    """Marker used in place of a sunrise/sunset time when none exists."""

    DAY = "PolarDay"
    NIGHT = "PolarNight"

    def __repr__(self):
        return self.value


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", normalize_lon(lon))


def normalize_lon(lon: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    out = (lon + 180.0) % 360.0 - 180.0
    # float modulo can land exactly on the open end
    return -180.0 if out >= 180.0 else out


@dataclass(frozen=True)
class SolarDay:
    date: date
    sunrise_utc: datetime | Polar
    sunset_utc: datetime | Polar
    noon_utc: datetime

    @property
    def has_sunset(self) -> bool:
        return isinstance(self.sunset_utc, datetime)

    @property
    def has_sunrise(self) -> bool:
        return isinstance(self.sunrise_utc, datetime)


# -- time helpers ------------------------------------------------------------

def as_utc(t: datetime) -> datetime:
    """Return ``t`` as a naive UTC datetime."""
    if t.tzinfo is not None:
        t = t.astimezone(timezone.utc).replace(tzinfo=None)
    return t


def epoch_hours(t: datetime) -> float:
    return (as_utc(t) - _EPOCH).total_seconds() / 3600.0


def from_epoch_hours(h: float) -> datetime:
    return _EPOCH + timedelta(hours=float(h))


def _check_year(t: datetime):
    if not _MIN_YEAR <= t.year <= _MAX_YEAR:
        raise DomainError(f"timestamp {t.isoformat()} outside {_MIN_YEAR}-{_MAX_YEAR}")


def _julian_century(epoch_h):
    jd = np.asarray(epoch_h, dtype=float) / 24.0 + 2440587.5
    return (jd - 2451545.0) / 36525.0


def _sun_terms(T):
    """Declination (deg) and equation of time (minutes) at Julian century T."""
    L0 = np.mod(280.46646 + T * (36000.76983 + 0.0003032 * T), 360.0)
    M = 357.52911 + T * (35999.05029 - 0.0001537 * T)
    e = 0.016708634 - T * (0.000042037 + 0.0000001267 * T)
    Mr = np.radians(M)
    C = (np.sin(Mr) * (1.914602 - T * (0.004817 + 0.000014 * T))
         + np.sin(2 * Mr) * (0.019993 - 0.000101 * T)
         + np.sin(3 * Mr) * 0.000289)
    omega = np.radians(125.04 - 1934.136 * T)
    app_long = np.radians(L0 + C - 0.00569 - 0.00478 * np.sin(omega))
    eps0 = 23.0 + (26.0 + (21.448 - T * (46.815 + T * (0.00059 - T * 0.001813))) / 60.0) / 60.0
    eps = np.radians(eps0 + 0.00256 * np.cos(omega))
    decl = np.degrees(np.arcsin(np.sin(eps) * np.sin(app_long)))
    y = np.tan(eps / 2.0) ** 2
    L0r = np.radians(L0)
    eot = 4.0 * np.degrees(
        y * np.sin(2 * L0r)
        - 2 * e * np.sin(Mr)
        + 4 * e * y * np.sin(Mr) * np.cos(2 * L0r)
        - 0.5 * y * y * np.sin(4 * L0r)
        - 1.25 * e * e * np.sin(2 * Mr)
    )
    return decl, eot


def sun_elevation(lat, lon, epoch_h):
    """Vectorised geometric solar elevation in degrees.

    ``epoch_h`` is UTC time in hours since 1970-01-01.  No refraction
    correction is applied.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    epoch_h = np.asarray(epoch_h, dtype=float)
    decl, eot = _sun_terms(_julian_century(epoch_h))
    minutes = np.mod(epoch_h, 24.0) * 60.0
    true_solar = np.mod(minutes + eot + 4.0 * lon, 1440.0)
    hour_angle = np.radians(true_solar / 4.0 - 180.0)
    latr, declr = np.radians(lat), np.radians(decl)
    cos_zen = np.sin(latr) * np.sin(declr) + np.cos(latr) * np.cos(declr) * np.cos(hour_angle)
    return 90.0 - np.degrees(np.arccos(np.clip(cos_zen, -1.0, 1.0)))


def sun_inclination(p: GeoPoint, t: datetime) -> float:
    """Solar elevation angle (degrees, [-90, 90]) at point ``p`` and UTC time ``t``."""
    t = as_utc(t)
    _check_year(t)
    return float(sun_elevation(p.lat, p.lon, epoch_hours(t)))


def _transit_epoch_h(lon: float, base: float, t: float) -> float:
    """Solar transit of the day starting at ``base`` using the equation of time at ``t``."""
    _, eot = _sun_terms(_julian_century(t))
    return base + (720.0 - 4.0 * lon - float(eot)) / 60.0


def _noon_epoch_h(lon: float, base: float) -> float:
    noon = base + 12.0 - lon / 15.0
    for _ in range(3):
        noon = _transit_epoch_h(lon, base, noon)
    return noon


def _crossing_epoch_h(lat: float, lon: float, base: float, noon: float, sign: int):
    """Epoch hour of the -0.833 deg crossing before (sign=-1) or after (+1) noon.

    Returns a ``Polar`` marker when the sun stays above or below the
    threshold all day.
    """
    t = noon
    latr = math.radians(lat)
    sin_alt = math.sin(math.radians(SUNRISE_ALTITUDE_DEG))
    for _ in range(4):
        decl, _ = _sun_terms(_julian_century(t))
        declr = math.radians(float(decl))
        denom = math.cos(latr) * math.cos(declr)
        if abs(denom) < 1e-12:
            # at a pole the sun is up all day iff it sits in the same hemisphere
            return Polar.DAY if lat * float(decl) > 0 else Polar.NIGHT
        arg = (sin_alt - math.sin(latr) * math.sin(declr)) / denom
        if arg >= 1.0:
            return Polar.NIGHT
        if arg <= -1.0:
            return Polar.DAY
        ha = math.degrees(math.acos(arg))
        t = _transit_epoch_h(lon, base, t) + sign * ha / 15.0
    return t


def solar_day(p: GeoPoint, day: date) -> SolarDay:
    """Sunrise, solar noon and sunset for the local solar calendar day ``day``.

    Sunrise and sunset are the instants the sun's centre crosses -0.833 deg.
    When no crossing exists both fields carry the same ``Polar`` marker.
    """
    if isinstance(day, datetime):
        day = day.date()
    if not _MIN_YEAR <= day.year <= _MAX_YEAR:
        raise DomainError(f"date {day} outside {_MIN_YEAR}-{_MAX_YEAR}")
    base = epoch_hours(datetime(day.year, day.month, day.day))
    noon = _noon_epoch_h(p.lon, base)
    rise = _crossing_epoch_h(p.lat, p.lon, base, noon, -1)
    sset = _crossing_epoch_h(p.lat, p.lon, base, noon, +1)
    if isinstance(rise, Polar) or isinstance(sset, Polar):
        marker = rise if isinstance(rise, Polar) else sset
        return SolarDay(day, marker, marker, from_epoch_hours(noon))
    return SolarDay(day, from_epoch_hours(rise), from_epoch_hours(sset), from_epoch_hours(noon))


def solar_offset_hours(lon: float) -> float:
    return lon / 15.0


def to_solar_time(lon: float, t: datetime) -> datetime:
    """Mean solar time at longitude ``lon``: UTC shifted by lon/15 hours."""
    return as_utc(t) + timedelta(hours=solar_offset_hours(lon))


def solar_hour_of_day(lon: float, t: datetime) -> float:
    st = to_solar_time(lon, t)
    return st.hour + st.minute / 60.0 + (st.second + st.microsecond * 1e-6) / 3600.0


# -- distances ---------------------------------------------------------------

def haversine_nm_arrays(lat1, lon1, lat2, lon2):
    """Vectorised great-circle distance in nautical miles."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    c = 2 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return EARTH_RADIUS_M * c / METERS_PER_NM


def haversine_nm(a: GeoPoint, b: GeoPoint) -> float:
    return float(haversine_nm_arrays(a.lat, a.lon, b.lat, b.lon))


def speed_knots(prev, next) -> float:
    """Speed between two echo records of the same buoy, in knots."""
    if prev.buoy_id != next.buoy_id:
        raise DomainError(f"records belong to different buoys: {prev.buoy_id!r}, {next.buoy_id!r}")
    hours = (as_utc(next.t_utc) - as_utc(prev.t_utc)).total_seconds() / 3600.0
    if hours <= 0:
        raise DomainError(f"non-positive elapsed time ({hours} h)")
    return haversine_nm(prev.position, next.position) / hours


def track_speeds(lat, lon, hours):
    """Speeds (knots) between consecutive points of a time-sorted track."""
    lat, lon, hours = (np.asarray(v, dtype=float) for v in (lat, lon, hours))
    if lat.size < 2:
        return np.empty(0)
    dt = np.diff(hours)
    if np.any(dt <= 0):
        raise DomainError("track timestamps must be strictly increasing")
    return haversine_nm_arrays(lat[:-1], lon[:-1], lat[1:], lon[1:]) / dt
