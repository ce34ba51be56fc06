"""Readers and writers for the four input tables.

Row-level problems never abort a read: offending rows are collected as
``Reject`` entries.  A missing file or a wrong header raises ``SchemaError``.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import math
import os
from dataclasses import dataclass, field
from datetime import date, datetime

import numpy as np

from .geo import GeoPoint, as_utc, epoch_hours

N_LAYERS = 10
LAYER_TOP_M = 3.0
LAYER_THICKNESS_M = 11.2

LOGBOOK_HEADER = ["event_id", "buoy_id", "buoy_model", "kind", "date", "lat", "lon", "catch_t"]
ECHO_HEADER = ["buoy_id", "ts_utc", "lat", "lon"] + [f"l{i}" for i in range(1, N_LAYERS + 1)]
OCEAN_VARS = ["temp", "chl", "o2", "sal", "thermo", "cur", "ssha"]
OCEAN_HEADER = ["date", "lat", "lon"] + OCEAN_VARS
BATHY_HEADER = ["lat", "lon", "depth_m"]
PROFILE_HEADER = ["date", "lat", "lon", "depth_m", "temp"]


class SchemaError(Exception):
    """Fatal input problem: unreadable file, bad header or malformed lattice."""

    def __init__(self, message, path=None, line=None):
        self.path, self.line = path, line
        where = ""
        if path is not None:
            where = f"{path}" + (f":{line}" if line is not None else "") + ": "
        super().__init__(where + message)


class GridLookupError(LookupError):
    pass


class BuoyModel(str, enum.Enum):
    ISL = "ISL+"
    SLX = "SLX+"
    ISD = "ISD+"


class EventKind(str, enum.Enum):
    SET = "SET"
    DEPLOYMENT = "DEPLOY"


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    text: str = ""


@dataclass(frozen=True)
class Event:
    event_id: str
    buoy_id: str
    buoy_model: BuoyModel
    kind: EventKind
    date: date
    position: GeoPoint
    catch_t: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "buoy_model", BuoyModel(self.buoy_model))
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.kind is EventKind.DEPLOYMENT:
            if self.catch_t is not None:
                raise ValueError("catch on deployment")
        else:
            if self.catch_t is None or not math.isfinite(self.catch_t) or self.catch_t < 0:
                raise ValueError(f"set catch must be finite and >= 0, got {self.catch_t!r}")

    @property
    def is_set(self) -> bool:
        return self.kind is EventKind.SET


@dataclass(frozen=True)
class EchoRecord:
    buoy_id: str
    t_utc: datetime
    position: GeoPoint
    layers: tuple

    def __post_init__(self):
        if len(self.layers) != N_LAYERS:
            raise ValueError("layer count")
        if any(not math.isfinite(v) or v < 0 for v in self.layers):
            raise ValueError("layer values must be finite and >= 0")

    @property
    def total(self) -> float:
        return float(sum(self.layers))


# -- low-level parsing -------------------------------------------------------

def _open_rows(path, header):
    """Yield (line_no, fields) after validating the header."""
    if not os.path.isfile(path):
        raise SchemaError("file not found", path)
    with open(path, "r", encoding="utf-8", errors="replace", newline="") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        got = next(reader)
    except StopIteration:
        raise SchemaError("empty file, header missing", path, 1) from None
    except csv.Error as exc:
        raise SchemaError(f"unreadable header ({exc})", path, 1) from None
    got = [h.strip().lstrip("﻿") for h in got]
    if got != header:
        raise SchemaError(f"bad header {got!r}, expected {header!r}", path, 1)
    line = 1
    while True:
        try:
            fields = next(reader)
        except StopIteration:
            return
        except csv.Error as exc:
            line += 1
            yield line, exc
            continue
        line = reader.line_num
        yield line, fields


def _float(s: str, name: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ValueError(f"bad {name} {s!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"non-finite {name}")
    return v


def parse_timestamp(s: str) -> datetime:
    s = s.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    return as_utc(datetime.fromisoformat(s))


def format_timestamp(t: datetime) -> str:
    return as_utc(t).strftime("%Y-%m-%dT%H:%M:%SZ")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


# -- logbook -----------------------------------------------------------------

def _parse_event(fields) -> Event:
    if len(fields) != len(LOGBOOK_HEADER):
        raise ValueError("field count")
    event_id, buoy_id, model, kind, day, lat, lon, catch = (f.strip() for f in fields)
    if not event_id or not buoy_id:
        raise ValueError("empty id")
    try:
        model = BuoyModel(model)
    except ValueError:
        raise ValueError(f"unknown buoy model {model!r}") from None
    try:
        kind = EventKind(kind)
    except ValueError:
        raise ValueError(f"unknown event kind {kind!r}") from None
    try:
        day = date.fromisoformat(day)
    except ValueError:
        raise ValueError(f"bad date {day!r}") from None
    pos = GeoPoint(_float(lat, "lat"), _float(lon, "lon"))
    if kind is EventKind.DEPLOYMENT:
        if catch:
            raise ValueError("catch on deployment")
        catch_v = None
    else:
        if not catch:
            raise ValueError("missing catch on set")
        catch_v = _float(catch, "catch_t")
        if catch_v < 0:
            raise ValueError("negative catch")
    return Event(event_id, buoy_id, model, kind, day, pos, catch_v)


def read_logbook(path):
    """Parse ``logbook.csv`` into events plus row-level rejects."""
    events, rejects, seen = [], [], set()
    for line, fields in _open_rows(path, LOGBOOK_HEADER):
        if isinstance(fields, Exception):
            rejects.append(Reject(line, f"unparseable row ({fields})"))
            continue
        try:
            ev = _parse_event(fields)
        except ValueError as exc:
            rejects.append(Reject(line, str(exc), ",".join(fields)))
            continue
        if ev.event_id in seen:
            rejects.append(Reject(line, "duplicate event_id", ",".join(fields)))
            continue
        seen.add(ev.event_id)
        events.append(ev)
    return events, rejects


def write_logbook(events, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOGBOOK_HEADER)
        for ev in events:
            w.writerow([
                ev.event_id, ev.buoy_id, ev.buoy_model.value, ev.kind.value,
                ev.date.isoformat(), _fmt(ev.position.lat), _fmt(ev.position.lon),
                _fmt(ev.catch_t),
            ])


# -- echo-sounder records ----------------------------------------------------

def _parse_echo(fields) -> EchoRecord:
    if len(fields) != len(ECHO_HEADER):
        if len(fields) >= 4:
            raise ValueError("layer count")
        raise ValueError("field count")
    buoy_id = fields[0].strip()
    if not buoy_id:
        raise ValueError("empty buoy_id")
    try:
        t = parse_timestamp(fields[1])
    except ValueError:
        raise ValueError(f"bad timestamp {fields[1]!r}") from None
    t = t.replace(minute=0, second=0, microsecond=0)
    pos = GeoPoint(_float(fields[2], "lat"), _float(fields[3], "lon"))
    layers = tuple(_float(v, "layer") for v in fields[4:])
    if any(v < 0 for v in layers):
        raise ValueError("negative layer value")
    return EchoRecord(buoy_id, t, pos, layers)


def read_echograms(path):
    """Parse ``echo.csv``; duplicate (buoy, hour) keys keep the larger layer-sum."""
    kept: dict = {}
    rejects = []
    for line, fields in _open_rows(path, ECHO_HEADER):
        if isinstance(fields, Exception):
            rejects.append(Reject(line, f"unparseable row ({fields})"))
            continue
        try:
            rec = _parse_echo(fields)
        except ValueError as exc:
            rejects.append(Reject(line, str(exc), ",".join(fields)))
            continue
        key = (rec.buoy_id, rec.t_utc)
        old = kept.get(key)
        if old is None:
            kept[key] = (line, rec)
        else:
            if rec.total > old[1].total:
                kept[key] = (line, rec)
                rejects.append(Reject(old[0], "duplicate hour"))
            else:
                rejects.append(Reject(line, "duplicate hour", ",".join(fields)))
    records = [rec for _, rec in kept.values()]
    records.sort(key=lambda r: (r.buoy_id, r.t_utc))
    return records, rejects


def write_echograms(records, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ECHO_HEADER)
        for r in records:
            w.writerow([r.buoy_id, format_timestamp(r.t_utc), _fmt(r.position.lat),
                        _fmt(r.position.lon)] + [_fmt(v) for v in r.layers])


@dataclass
class Track:
    """Time-sorted arrays for one buoy; ``hours`` are UTC hours since epoch."""

    buoy_id: str
    hours: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    layers: np.ndarray  # (n, 10)

    def __len__(self):
        return len(self.hours)

    def span(self, start_h, stop_h):
        """Index slice of records with start_h <= hour < stop_h."""
        i = int(np.searchsorted(self.hours, start_h, side="left"))
        j = int(np.searchsorted(self.hours, stop_h, side="left"))
        return slice(i, j)


def group_tracks(records) -> dict:
    """Collect records into per-buoy ``Track`` arrays."""
    by_buoy: dict = {}
    for r in records:
        by_buoy.setdefault(r.buoy_id, []).append(r)
    tracks = {}
    for buoy, recs in by_buoy.items():
        recs.sort(key=lambda r: r.t_utc)
        hours = np.array([round(epoch_hours(r.t_utc)) for r in recs], dtype=np.int64)
        tracks[buoy] = Track(
            buoy,
            hours,
            np.array([r.position.lat for r in recs]),
            np.array([r.position.lon for r in recs]),
            np.array([r.layers for r in recs], dtype=float).reshape(len(recs), N_LAYERS),
        )
    return tracks


# -- grids -------------------------------------------------------------------

def _regular_axis(values, name, path):
    """Sorted regular axis from observed coordinates; gaps allowed, irregular spacing not."""
    uniq = np.unique(np.asarray(values, dtype=float))
    if uniq.size == 1:
        return uniq, 0.0
    step = float(np.min(np.diff(uniq)))
    pos = (uniq - uniq[0]) / step
    idx = np.rint(pos)
    bad = np.abs(pos - idx) > 1e-6
    if np.any(bad):
        raise SchemaError(f"non-rectangular lattice: {name}={uniq[np.argmax(bad)]!r} "
                          f"is off the {step:g} spacing", path)
    n = int(idx[-1]) + 1
    axis = uniq[0] + step * np.arange(n)
    axis[idx.astype(int)] = uniq
    return axis, step


def _axis_index(axis, step, values):
    if step == 0:
        return np.zeros(len(values), dtype=int)
    return np.rint((np.asarray(values, dtype=float) - axis[0]) / step).astype(int)


def _nearest_on_axis(axis, step, v):
    """Nearest index on a regular axis; exact midpoints go to the lower index."""
    if step == 0:
        return np.zeros(np.shape(v), dtype=int)
    x = (np.asarray(v, dtype=float) - axis[0]) / step
    i = np.ceil(x - 0.5).astype(int)
    return np.clip(i, 0, len(axis) - 1)


@dataclass
class OceanGrid:
    lats: np.ndarray
    lons: np.ndarray
    dates: list
    values: dict  # var -> (n_dates, n_lat, n_lon), NaN = missing
    lat_step: float = 0.0
    lon_step: float = 0.0
    _date_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._date_index = {d: i for i, d in enumerate(self.dates)}

    @property
    def resolution(self) -> float:
        return self.lat_step or self.lon_step

    def date_index(self, day: date) -> int:
        try:
            return self._date_index[day]
        except KeyError:
            raise GridLookupError(f"date {day} outside ocean grid time axis "
                                  f"[{self.dates[0]}, {self.dates[-1]}]") from None

    def node_index(self, lat, lon):
        return (_nearest_on_axis(self.lats, self.lat_step, lat),
                _nearest_on_axis(self.lons, self.lon_step, lon))

    def sample(self, day_idx, lat_idx, lon_idx) -> dict:
        return {v: self.values[v][day_idx, lat_idx, lon_idx] for v in OCEAN_VARS}


@dataclass
class BathyGrid:
    lats: np.ndarray
    lons: np.ndarray
    depth: np.ndarray  # (n_lat, n_lon), positive down, NaN = missing
    lat_step: float = 0.0
    lon_step: float = 0.0

    def depth_at(self, lat, lon):
        i = _nearest_on_axis(self.lats, self.lat_step, lat)
        j = _nearest_on_axis(self.lons, self.lon_step, lon)
        return self.depth[i, j]


def _check_resolution(lat_step, lon_step, path):
    if lat_step and lon_step and abs(lat_step - lon_step) > 1e-9 * max(lat_step, lon_step):
        raise SchemaError(f"mixed resolutions in one file (lat {lat_step:g}, lon {lon_step:g})", path)


def read_grid(path, kind: str):
    """Read ``ocean.csv`` (kind='ocean') or ``bathy.csv`` (kind='bathy') into a lattice."""
    if kind not in ("ocean", "bathy"):
        raise ValueError(f"unknown grid kind {kind!r}")
    header = OCEAN_HEADER if kind == "ocean" else BATHY_HEADER
    rows = []
    for line, fields in _open_rows(path, header):
        if isinstance(fields, Exception) or len(fields) != len(header):
            raise SchemaError("malformed row", path, line)
        try:
            if kind == "ocean":
                key = (date.fromisoformat(fields[0].strip()), _float(fields[1], "lat"),
                       _float(fields[2], "lon"))
                vals = [float(f) if f.strip() else math.nan for f in fields[3:]]
            else:
                key = (_float(fields[0], "lat"), _float(fields[1], "lon"))
                vals = [float(fields[2]) if fields[2].strip() else math.nan]
        except ValueError as exc:
            raise SchemaError(str(exc), path, line) from None
        rows.append((line, key, vals))

    if kind == "bathy":
        lats, lat_step = _regular_axis([k[0] for _, k, _ in rows] or [0.0], "lat", path)
        lons, lon_step = _regular_axis([k[1] for _, k, _ in rows] or [0.0], "lon", path)
        _check_resolution(lat_step, lon_step, path)
        depth = np.full((len(lats), len(lons)), np.nan)
        if rows:
            ii = _axis_index(lats, lat_step, [k[0] for _, k, _ in rows])
            jj = _axis_index(lons, lon_step, [k[1] for _, k, _ in rows])
            seen = set()
            for (line, key, vals), i, j in zip(rows, ii, jj):
                if (i, j) in seen:
                    raise SchemaError(f"duplicate cell {key}", path, line)
                seen.add((i, j))
                depth[i, j] = vals[0]
        return BathyGrid(lats, lons, depth, lat_step, lon_step)

    if not rows:
        raise SchemaError("ocean grid has no rows", path)
    day_ords = sorted({k[0].toordinal() for _, k, _ in rows})
    dates = [date.fromordinal(o) for o in range(day_ords[0], day_ords[-1] + 1)]
    lats, lat_step = _regular_axis([k[1] for _, k, _ in rows], "lat", path)
    lons, lon_step = _regular_axis([k[2] for _, k, _ in rows], "lon", path)
    _check_resolution(lat_step, lon_step, path)
    shape = (len(dates), len(lats), len(lons))
    cube = np.full((len(OCEAN_VARS),) + shape, np.nan)
    ii = _axis_index(lats, lat_step, [k[1] for _, k, _ in rows])
    jj = _axis_index(lons, lon_step, [k[2] for _, k, _ in rows])
    filled = np.zeros(shape, dtype=bool)
    d0 = day_ords[0]
    for (line, key, vals), i, j in zip(rows, ii, jj):
        d = key[0].toordinal() - d0
        if filled[d, i, j]:
            raise SchemaError(f"duplicate cell {key}", path, line)
        filled[d, i, j] = True
        cube[:, d, i, j] = vals
    values = {v: cube[k] for k, v in enumerate(OCEAN_VARS)}
    return OceanGrid(lats, lons, dates, values, lat_step, lon_step)


def write_ocean_grid(grid: OceanGrid, path):
    """Write non-empty cells in (date, lat, lon) order; all-missing cells are omitted."""
    cube = np.stack([grid.values[v] for v in OCEAN_VARS])
    present = ~np.all(np.isnan(cube), axis=0)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OCEAN_HEADER)
        for d, i, j in zip(*np.nonzero(present)):
            w.writerow([grid.dates[d].isoformat(), _fmt(grid.lats[i]), _fmt(grid.lons[j])]
                       + [_fmt(x) for x in cube[:, d, i, j]])


def write_bathy(grid: BathyGrid, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BATHY_HEADER)
        for i, j in zip(*np.nonzero(~np.isnan(grid.depth))):
            w.writerow([_fmt(grid.lats[i]), _fmt(grid.lons[j]), _fmt(grid.depth[i, j])])


def nearest_cell(grid: OceanGrid, p: GeoPoint, day: date) -> dict:
    """Variable values at the lattice node nearest to ``p`` (Euclidean in degrees).

    Ties go to the smaller latitude, then the smaller longitude.
    """
    d = grid.date_index(day)
    i, j = grid.node_index(p.lat, p.lon)
    return {k: float(v) for k, v in grid.sample(d, int(i), int(j)).items()}


# -- thermocline -------------------------------------------------------------

def thermocline_depth(profile, delta_c: float = 2.0):
    """Depth where temperature first drops ``delta_c`` below the surface value.

    ``profile`` is a depth-sorted sequence of (depth_m, temp_c) pairs whose
    first entry is the surface.  Linear interpolation between the bracketing
    samples; ``None`` when the profile never gets that cold.
    """
    if not profile:
        return None
    target = profile[0][1] - delta_c
    for (d0, t0), (d1, t1) in zip(profile, profile[1:]):
        if t1 <= target:
            if t1 == t0:
                return float(d1)
            return float(d0 + (target - t0) * (d1 - d0) / (t1 - t0))
    return None


def read_profiles(path) -> dict:
    """Temperature profiles keyed by (date, lat, lon), each sorted by depth."""
    profiles: dict = {}
    for line, fields in _open_rows(path, PROFILE_HEADER):
        if isinstance(fields, Exception) or len(fields) != len(PROFILE_HEADER):
            raise SchemaError("malformed row", path, line)
        try:
            key = (date.fromisoformat(fields[0].strip()), _float(fields[1], "lat"),
                   _float(fields[2], "lon"))
            sample = (_float(fields[3], "depth_m"), _float(fields[4], "temp"))
        except ValueError as exc:
            raise SchemaError(str(exc), path, line) from None
        profiles.setdefault(key, []).append(sample)
    for v in profiles.values():
        v.sort()
    return profiles


def fill_thermocline(grid: OceanGrid, profiles: dict) -> int:
    """Fill missing thermocline cells from profiles; precomputed values win.

    Returns the number of cells filled.
    """
    thermo = grid.values["thermo"]
    filled = 0
    for (day, lat, lon), prof in profiles.items():
        if day not in grid._date_index:
            continue
        d = grid._date_index[day]
        i, j = (int(x) for x in grid.node_index(lat, lon))
        if not (np.isclose(grid.lats[i], lat) and np.isclose(grid.lons[j], lon)):
            continue
        if np.isnan(thermo[d, i, j]):
            depth = thermocline_depth(prof)
            if depth is not None:
                thermo[d, i, j] = depth
                filled += 1
    return filled


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


__all__ = [
    "BuoyModel", "EventKind", "Event", "EchoRecord", "Reject", "SchemaError",
    "GridLookupError", "OceanGrid", "BathyGrid", "Track", "read_logbook",
    "read_echograms", "read_grid", "write_logbook", "write_echograms",
    "write_ocean_grid", "write_bathy", "nearest_cell", "thermocline_depth",
    "group_tracks", "read_profiles", "fill_thermocline",
]
