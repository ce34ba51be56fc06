"""From events and buoy records to labeled, sunset-anchored examples.

Windows are defined on integer UTC hours (records are hour-granular) and
labelled with mean-solar-hour buckets at the event longitude, so each UTC
hour falls in exactly one bucket.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from . import geo
from .geo import SolarDay
from .ingest import (
    N_LAYERS,
    OCEAN_VARS,
    BathyGrid,
    EchoRecord,
    Event,
    EventKind,
    GridLookupError,
    OceanGrid,
    Track,
    group_tracks,
)

WINDOW_HOURS = (24, 48, 72)
OCEAN_SAMPLE_HOURS = (0, 23, 47, 71)
MAX_SPEED_KNOTS = 3.0
MIN_DEPTH_M = 200.0
DEAD_BUOY_MARGIN_H = 7 * 24

DROP_REASONS = ("id_mismatch", "no_sunset", "insufficient_coverage",
                "overlap", "on_land", "shallow", "speeding")


@dataclass(frozen=True)
class Skip:
    reason: str  # "no_sunset" | "no_records"


@dataclass
class EchoWindow:
    """W hourly columns in chronological order.

    ``matrix`` is layers x hours with NaN for missing hours; ``rec_index``
    points into the buoy's ``Track`` (-1 where missing).
    """

    event_id: str
    kind: EventKind
    W: int
    anchor_utc: datetime
    anchor_day: SolarDay
    offset_h: float
    hours: np.ndarray       # UTC epoch hours, one per column
    matrix: np.ndarray      # (10, W)
    rec_index: np.ndarray   # (W,)
    lat: np.ndarray         # (W,) LKP per column, NaN when missing
    lon: np.ndarray

    @property
    def present(self) -> np.ndarray:
        return self.rec_index >= 0

    @property
    def n_zero_readings(self) -> int:
        return int(self.W - np.count_nonzero(self.present))

    @property
    def end_utc(self) -> datetime:
        """The sunset anchor the window hangs off."""
        return self.anchor_utc

    @property
    def solar_buckets(self) -> np.ndarray:
        return np.floor(self.hours + self.offset_h).astype(np.int64)

    def anchor_order(self) -> np.ndarray:
        """Column indices sorted so position x is hour x away from the anchor."""
        idx = np.arange(self.W)
        return idx[::-1] if self.kind is EventKind.SET else idx

    def by_anchor_distance(self) -> np.ndarray:
        return self.matrix[:, self.anchor_order()]

    def imputed(self) -> np.ndarray:
        return np.nan_to_num(self.matrix, nan=0.0)


@dataclass
class CleanReport:
    counts: dict = field(default_factory=lambda: {k: 0 for k in DROP_REASONS})
    survivors: list = field(default_factory=list)
    dropped: dict = field(default_factory=dict)  # event_id -> reason

    @property
    def n_input(self) -> int:
        return sum(self.counts.values()) + len(self.survivors)

    def drop(self, event_id, reason):
        self.counts[reason] += 1
        self.dropped[event_id] = reason

    def merge(self, other: "CleanReport") -> "CleanReport":
        out = CleanReport()
        for k in DROP_REASONS:
            out.counts[k] = self.counts[k] + other.counts[k]
        out.survivors = sorted(self.survivors + other.survivors)
        out.dropped = {**self.dropped, **other.dropped}
        return out

    __add__ = merge

    def table(self) -> str:
        rows = [("rule", "dropped")] + [(k, str(v)) for k, v in self.counts.items()]
        rows += [("survivors", str(len(self.survivors))), ("input", str(self.n_input))]
        w = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{w}}  {b:>7}" for a, b in rows)


@dataclass
class Context:
    date: date
    year: int
    lat: float
    lon: float
    ocean_basin: str
    sunrise_hour: float
    sunset_hour: float
    buoy_model: str


@dataclass
class LabeledExample:
    event_id: str
    kind: EventKind
    window: EchoWindow
    ocean: dict      # var -> array of 4 samples at OCEAN_SAMPLE_HOURS
    context: Context
    y: float
    ocean_flagged: bool = False


def ocean_basin(lat: float, lon: float) -> str:
    """Coarse basin partition: ATL, IND or PAC."""
    if -70.0 <= lon < 20.0:
        return "ATL"
    if 20.0 <= lon < 130.0 and lat < 30.0:
        return "IND"
    return "PAC"


def _as_tracks(records) -> dict:
    if isinstance(records, dict):
        return records
    return group_tracks(list(records))


def link_events(events, records):
    """Map event_id -> buoy Track for events whose buoy has records."""
    tracks = _as_tracks(records)
    linked, unmatched = {}, []
    for ev in events:
        tr = tracks.get(ev.buoy_id)
        if tr is None or len(tr) == 0:
            unmatched.append(ev.event_id)
        else:
            linked[ev.event_id] = tr
    return linked, unmatched


def _anchor(event: Event):
    day = event.date - timedelta(days=1) if event.is_set else event.date
    sd = geo.solar_day(event.position, day)
    return sd


def extract_window(event: Event, track: Track, W: int):
    """Sunset-anchored window for one event, or ``Skip``.

    Sets take the W hours ending at sunset of the day before the event;
    deployments the W hours following sunset of the deployment day.
    """
    if W not in WINDOW_HOURS:
        raise ValueError(f"window must be one of {WINDOW_HOURS}, got {W}")
    sd = _anchor(event)
    if not sd.has_sunset:
        return Skip("no_sunset")
    anchor_h = geo.epoch_hours(sd.sunset_utc)
    if event.is_set:
        last = math.floor(anchor_h)
        hours = np.arange(last - W + 1, last + 1, dtype=np.int64)
    else:
        first = math.floor(anchor_h) + 1
        hours = np.arange(first, first + W, dtype=np.int64)

    sl = track.span(hours[0], hours[-1] + 1)
    idx = np.arange(sl.start, sl.stop)
    if idx.size == 0:
        near = track.span(hours[0] - DEAD_BUOY_MARGIN_H, hours[-1] + 1 + DEAD_BUOY_MARGIN_H)
        if near.stop - near.start == 0:
            return Skip("no_records")

    rec_index = np.full(W, -1, dtype=np.int64)
    col = track.hours[idx] - hours[0]
    # one record per UTC hour; if an hour repeats keep the larger layer-sum
    for c, i in zip(col, idx):
        j = rec_index[c]
        if j < 0 or track.layers[i].sum() > track.layers[j].sum():
            rec_index[c] = i
    present = rec_index >= 0
    matrix = np.full((N_LAYERS, W), np.nan)
    matrix[:, present] = track.layers[rec_index[present]].T
    lat = np.full(W, np.nan)
    lon = np.full(W, np.nan)
    lat[present] = track.lat[rec_index[present]]
    lon[present] = track.lon[rec_index[present]]
    return EchoWindow(
        event_id=event.event_id, kind=event.kind, W=W, anchor_utc=sd.sunset_utc,
        anchor_day=sd, offset_h=geo.solar_offset_hours(event.position.lon), hours=hours,
        matrix=matrix, rec_index=rec_index, lat=lat, lon=lon,
    )


def overlaps_event_day(event: Event, window: EchoWindow) -> bool:
    """True if the window could contain the intervention itself.

    Sets: some column falls on or after the event's solar date.  Deployments:
    some column is at or before the event-day sunset.
    """
    if event.is_set:
        first_of_day = (event.date - date(1970, 1, 1)).days * 24
        return bool(np.any(window.solar_buckets >= first_of_day))
    return bool(np.any(window.hours <= geo.epoch_hours(window.anchor_utc)))


def _rule_violation(event: Event, window: EchoWindow, bathy: BathyGrid | None):
    if overlaps_event_day(event, window):
        return "overlap"
    if bathy is not None:
        d = bathy.depth_at(event.position.lat, event.position.lon)
        if np.isfinite(d) and d <= 0:
            return "on_land"
        pres = window.present
        if pres.any():
            depths = bathy.depth_at(window.lat[pres], window.lon[pres])
            if np.any(np.isfinite(depths) & (depths < MIN_DEPTH_M)):
                return "shallow"
    pres = window.present
    if np.count_nonzero(pres) >= 2:
        speeds = geo.track_speeds(window.lat[pres], window.lon[pres], window.hours[pres])
        if np.any(speeds > MAX_SPEED_KNOTS):
            return "speeding"
    return None


def clean(events, windows: dict, records, bathy: BathyGrid | None) -> CleanReport:
    """Apply the cleaning rules in fixed order and tally drops.

    ``windows`` maps event_id to an ``EchoWindow`` or ``Skip``; events absent
    from it (or whose buoy has no records) count as id mismatches.
    """
    tracks = _as_tracks(records)
    report = CleanReport()
    for ev in sorted(events, key=lambda e: e.event_id):
        w = windows.get(ev.event_id)
        if ev.buoy_id not in tracks or w is None:
            report.drop(ev.event_id, "id_mismatch")
        elif isinstance(w, Skip):
            report.drop(ev.event_id, "no_sunset" if w.reason == "no_sunset" else "insufficient_coverage")
        else:
            reason = _rule_violation(ev, w, bathy)
            if reason is None:
                report.survivors.append(ev.event_id)
            else:
                report.drop(ev.event_id, reason)
    return report


def _nearest_present(window: EchoWindow, col: int):
    pres = np.nonzero(window.present)[0]
    if pres.size == 0:
        return None
    dist = np.abs(pres - col)
    # equidistant: prefer the column nearer the anchor
    order = window.anchor_order()
    rank = np.empty(window.W, dtype=int)
    rank[order] = np.arange(window.W)
    best = min(zip(dist, rank[pres], pres))
    return int(best[2])


def attach_ocean(window: EchoWindow, grid: OceanGrid | None, event: Event):
    """Ocean variables at hours 0, 23, 47, 71 from the anchor.

    Each sample uses the LKP of the nearest populated window hour (falling
    back to the event position) and the UTC calendar day of the sample hour.
    Returns (dict var -> 4 values, all_missing flag).
    """
    out = {v: np.full(len(OCEAN_SAMPLE_HOURS), np.nan) for v in OCEAN_VARS}
    if grid is None:
        return out, True
    order = window.anchor_order()
    for k, x in enumerate(OCEAN_SAMPLE_HOURS):
        if x >= window.W:
            continue
        col = int(order[x])
        src = _nearest_present(window, col)
        if src is None:
            lat, lon = event.position.lat, event.position.lon
        else:
            lat, lon = window.lat[src], window.lon[src]
        day = geo.from_epoch_hours(window.hours[col]).date()
        try:
            d = grid.date_index(day)
        except GridLookupError:
            continue
        i, j = grid.node_index(lat, lon)
        for v in OCEAN_VARS:
            out[v][k] = grid.values[v][d, i, j]
    flagged = all(np.isnan(a).all() for a in out.values())
    return out, flagged


def _context(event: Event, window: EchoWindow) -> Context:
    order = window.anchor_order()
    src = _nearest_present(window, int(order[0]))
    if src is None:
        lat, lon = event.position.lat, event.position.lon
    else:
        lat, lon = float(window.lat[src]), float(window.lon[src])
    sd = window.anchor_day
    rise = geo.solar_hour_of_day(event.position.lon, sd.sunrise_utc)
    sset = geo.solar_hour_of_day(event.position.lon, sd.sunset_utc)
    return Context(event.date, event.date.year, lat, lon, ocean_basin(lat, lon),
                   rise, sset, event.buoy_model.value)


def label_value(event: Event) -> float:
    return float(event.catch_t) if event.is_set else 0.0


def build_dataset(logbook, echo, grid: OceanGrid | None, bathy: BathyGrid | None, W: int):
    """Link, window, clean, attach oceanography and label.

    ``echo`` may be a list of ``EchoRecord`` or a dict of ``Track``.
    Returns (examples sorted by event_id, CleanReport).
    """
    tracks = _as_tracks(echo)
    events = sorted(logbook, key=lambda e: e.event_id)
    linked, _ = link_events(events, tracks)
    windows = {eid: extract_window(ev, linked[eid], W)
               for ev in events if (eid := ev.event_id) in linked}
    report = clean(events, windows, tracks, bathy)
    by_id = {ev.event_id: ev for ev in events}
    examples = []
    for eid in report.survivors:
        ev, win = by_id[eid], windows[eid]
        ocean, flagged = attach_ocean(win, grid, ev)
        examples.append(LabeledExample(eid, ev.kind, win, ocean, _context(ev, win),
                                       label_value(ev), flagged))
    return examples, report


__all__ = [
    "EchoWindow", "CleanReport", "LabeledExample", "Context", "Skip", "link_events",
    "extract_window", "clean", "attach_ocean", "build_dataset", "ocean_basin",
    "overlaps_event_day", "EchoRecord", "WINDOW_HOURS", "OCEAN_SAMPLE_HOURS",
]
