"""Seeded synthetic fleet: drifting buoys, circadian aggregation, censored echo, events.

Latent biomass under a buoy at hour h is

    B(h) = K * colon(soak) * exp(beta . z) * eta_day * gate(solar hour) * exp(eps_h)

where ``z`` are standardized ocean covariates at the buoy, ``gate`` is high
between dawn and dusk and ``eta_day`` is a day-level fluctuation.  Echo rows
carry B split over 10 layers (shallow by day, deep at night) and are only
emitted when the layer sum reaches 1 t.  A set catches the whole aggregation
level K * colon * exp(beta . z), scaled by an ocean-dependent catchability
exp(gamma . z) and lognormal noise.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from datetime import date, timedelta
from statistics import NormalDist

import numpy as np

from .geo import GeoPoint, from_epoch_hours
from .ingest import (
    N_LAYERS,
    OCEAN_VARS,
    BathyGrid,
    BuoyModel,
    EchoRecord,
    Event,
    EventKind,
    OceanGrid,
    Track,
    _fmt,
    format_timestamp,
    write_bathy,
    write_echograms,
    write_logbook,
    write_ocean_grid,
)

DETECTION_T = 1.0
RULES = (1, 3, 4, 5)

# (mean, amplitude) of each ocean field
OCEAN_FIELDS = {
    "temp": (27.0, 2.0),
    "chl": (0.3, 0.15),
    "o2": (4.5, 0.4),
    "sal": (35.0, 0.5),
    "thermo": (80.0, 30.0),
    "cur": (0.4, 0.2),
    "ssha": (0.0, 0.1),
}

ISLAND_NODE = (12.25, 52.5)
BANK_NODE = (-12.75, 66.5)


@dataclass
class SynthConfig:
    seed: int = 0
    n_buoys: int = 100
    days: int = 40
    start: date = date(2019, 3, 1)
    region: tuple = (-10.0, 10.0, 50.0, 70.0)  # lat0, lat1, lon0, lon1
    margin_deg: float = 4.0
    ocean_step: float = 0.5
    bathy_step: float = 0.25
    ocean_missing_rate: float = 0.0
    ocean_wavelength_deg: float = 12.0
    ocean_period_days: float = 90.0
    k_median: float = 40.0
    k_sigma: float = 0.5
    colon_rate: float = 0.35    # per day
    colon_mid: float = 8.0      # days
    night_level: float = 0.08
    hourly_sigma: float = 0.25
    daily_sigma: float = 0.45
    coupling: dict = field(default_factory=lambda: {"temp": 0.2, "chl": 0.2})
    catch_coupling: dict = field(default_factory=lambda: {"thermo": -0.6, "o2": 0.3})
    catch_sigma: float = 0.25
    deployed_frac: float = 0.5
    set_rate: float = 0.2
    set_bias: float = 1.0
    violation_rates: dict = field(default_factory=lambda: {r: 0.05 for r in RULES})
    max_speed_kn: float = 2.5

    def __post_init__(self):
        rates = [self.ocean_missing_rate, self.deployed_frac, self.set_rate,
                 *self.violation_rates.values()]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError("rates must lie in [0, 1]")
        if self.days < 12:
            raise ValueError("need at least 12 simulated days")
        for name in list(self.coupling) + list(self.catch_coupling):
            if name not in OCEAN_VARS:
                raise ValueError(f"unknown ocean variable {name!r}")


@dataclass
class World:
    config: SynthConfig
    events: list
    tracks: dict            # emitted echo, buoy -> Track
    ocean: OceanGrid
    bathy: BathyGrid
    truth_hours: dict       # buoy -> int64 epoch hours while alive
    truth_b: dict           # buoy -> latent biomass per alive hour
    truth_layers: dict      # buoy -> (n, 10) undisplaced layer tonnes
    truth_mean: dict        # buoy -> noise-free expectation of B (for validation)
    event_truth: dict       # event_id -> (y, rule or 0)

    def echo_records(self) -> list:
        out = []
        for buoy in sorted(self.tracks):
            tr = self.tracks[buoy]
            for k in range(len(tr)):
                out.append(EchoRecord(buoy, from_epoch_hours(int(tr.hours[k])),
                                      GeoPoint(float(tr.lat[k]), float(tr.lon[k])),
                                      tuple(float(v) for v in tr.layers[k])))
        return out

    def injected_counts(self) -> dict:
        counts = {r: 0 for r in RULES}
        for _, rule in self.event_truth.values():
            if rule:
                counts[rule] += 1
        return counts

    def truth_column(self, buoy: str, hour: int):
        """(latent B, layers) at an epoch hour, or None if the buoy was not alive."""
        hrs = self.truth_hours[buoy]
        k = int(np.searchsorted(hrs, hour))
        if k == len(hrs) or hrs[k] != hour:
            return None
        return self.truth_b[buoy][k], self.truth_layers[buoy][k]

    def write(self, outdir) -> dict:
        os.makedirs(outdir, exist_ok=True)
        paths = {k: os.path.join(outdir, f"{k}.csv")
                 for k in ("logbook", "echo", "ocean", "bathy", "ground_truth",
                           "ground_truth_events")}
        write_logbook(self.events, paths["logbook"])
        write_echograms(self.echo_records(), paths["echo"])
        write_ocean_grid(self.ocean, paths["ocean"])
        write_bathy(self.bathy, paths["bathy"])
        with open(paths["ground_truth"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["buoy_id", "ts_utc", "latent_b"])
            for buoy in sorted(self.truth_hours):
                for h, b in zip(self.truth_hours[buoy], self.truth_b[buoy]):
                    w.writerow([buoy, format_timestamp(from_epoch_hours(int(h))), _fmt(b)])
        with open(paths["ground_truth_events"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["event_id", "rule_violation", "y"])
            for eid in sorted(self.event_truth):
                y, rule = self.event_truth[eid]
                w.writerow([eid, rule, _fmt(y)])
        return paths


# -- fields ------------------------------------------------------------------

def _axis(lo, hi, step):
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 6)


def _ocean_grid(cfg: SynthConfig, rng) -> tuple:
    lat0, lat1, lon0, lon1 = cfg.region
    m = cfg.margin_deg
    lats = _axis(lat0 - m, lat1 + m, cfg.ocean_step)
    lons = _axis(lon0 - m, lon1 + m, cfg.ocean_step)
    dates = [cfg.start + timedelta(days=d) for d in range(-1, cfg.days + 2)]
    t = np.arange(-1, cfg.days + 2, dtype=float)[:, None, None]
    la, lo = lats[None, :, None], lons[None, None, :]
    lam, per = cfg.ocean_wavelength_deg, cfg.ocean_period_days
    z, values = {}, {}
    for v in OCEAN_VARS:
        p1, p2 = rng.uniform(0, 2 * np.pi, 2)
        scale = rng.uniform(0.7, 1.3)
        zz = np.sin(2 * np.pi * (la / (lam * scale) + t / per) + p1) * np.cos(2 * np.pi * lo / (lam / scale) + p2)
        mean, amp = OCEAN_FIELDS[v]
        vals = np.round(mean + amp * zz, 5)
        z[v] = (vals - mean) / amp
        if cfg.ocean_missing_rate > 0:
            vals = vals.copy()
            vals[rng.random(vals.shape) < cfg.ocean_missing_rate] = np.nan
        values[v] = vals
    grid = OceanGrid(lats, lons, dates, values, cfg.ocean_step, cfg.ocean_step)
    return grid, z


def _bathy_grid(cfg: SynthConfig, rng) -> BathyGrid:
    lat0, lat1, lon0, lon1 = cfg.region
    m = cfg.margin_deg
    lats = _axis(lat0 - m, lat1 + m, cfg.bathy_step)
    lons = _axis(lon0 - m, lon1 + m, cfg.bathy_step)
    depth = np.round(4000.0 + 800.0 * rng.standard_normal((len(lats), len(lons))).clip(-1.5, 1.5), 1)
    for (plat, plon), d in ((ISLAND_NODE, -20.0), (BANK_NODE, 150.0)):
        i = np.abs(lats - plat) <= 0.5
        j = np.abs(lons - plon) <= 0.5
        depth[np.ix_(i, j)] = d
    return BathyGrid(lats, lons, depth, cfg.bathy_step, cfg.bathy_step)


def colonization(soak_days, rate, mid):
    """Logistic colonization normalized to start at 0 and saturate at 1."""
    s = np.maximum(np.asarray(soak_days, dtype=float), 0.0)
    lo = 1.0 / (1.0 + math.exp(rate * mid))
    return (1.0 / (1.0 + np.exp(-rate * (s - mid))) - lo) / (1.0 - lo)


def diurnal_gate(solar_hour, night_level):
    day = np.maximum(np.cos(2 * np.pi * (np.asarray(solar_hour) - 12.0) / 24.0), 0.0)
    return night_level + (1.0 - night_level) * day


def layer_profile(solar_hour, night_level):
    """Fractions over the 10 layers: centred shallow at noon, deep at night."""
    g = (diurnal_gate(solar_hour, 0.0))[..., None]
    mu = 1.5 + 5.0 * (1.0 - g)
    k = np.arange(N_LAYERS)
    w = np.exp(-0.5 * ((k - mu) / 1.3) ** 2)
    return w / w.sum(axis=-1, keepdims=True)


# -- generation --------------------------------------------------------------

def _drift(cfg: SynthConfig, rng, n_hours: int):
    """Hourly positions for every buoy: persistent random walk, speed-capped."""
    lat0, lat1, lon0, lon1 = cfg.region
    nb = cfg.n_buoys
    lat = np.empty((nb, n_hours))
    lon = np.empty((nb, n_hours))
    lat[:, 0] = rng.uniform(lat0 + 1, lat1 - 1, nb)
    lon[:, 0] = rng.uniform(lon0 + 1, lon1 - 1, nb)
    v = rng.normal(0, 0.6, (nb, 2))
    cap = cfg.max_speed_kn * 0.95
    for h in range(1, n_hours):
        v = 0.97 * v + rng.normal(0, 0.12, (nb, 2))
        sp = np.hypot(v[:, 0], v[:, 1])
        v *= np.minimum(1.0, cap / np.maximum(sp, 1e-12))[:, None]
        la = lat[:, h - 1] + v[:, 0] / 60.0
        lo = lon[:, h - 1] + v[:, 1] / (60.0 * np.cos(np.radians(lat[:, h - 1])))
        out_la = (la < lat0) | (la > lat1)
        out_lo = (lo < lon0) | (lo > lon1)
        v[out_la, 0] *= -1
        v[out_lo, 1] *= -1
        lat[:, h] = np.where(out_la, lat[:, h - 1], la)
        lon[:, h] = np.where(out_lo, lon[:, h - 1], lo)
    return np.round(lat, 5), np.round(lon, 5)


def generate(config: SynthConfig) -> World:
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    ocean, z = _ocean_grid(cfg, rng)
    bathy = _bathy_grid(cfg, rng)
    n_hours = cfg.days * 24
    h0 = (cfg.start - date(1970, 1, 1)).days * 24
    lat, lon = _drift(cfg, rng, n_hours)

    hours_rel = np.arange(n_hours)
    day_idx = hours_rel // 24 + 1  # ocean date axis starts one day early
    beta = {v: cfg.coupling.get(v, 0.0) for v in OCEAN_VARS}
    gamma = {v: cfg.catch_coupling.get(v, 0.0) for v in OCEAN_VARS}

    events_raw, truth_hours, truth_b, truth_layers, truth_mean = [], {}, {}, {}, {}
    tracks = {}
    models = list(BuoyModel)
    for b in range(cfg.n_buoys):
        buoy = f"B{b:04d}"
        model = models[rng.integers(len(models))]
        K = cfg.k_median * math.exp(cfg.k_sigma * rng.standard_normal())
        blat, blon = lat[b], lon[b]
        solar_h = (hours_rel + blon / 15.0) % 24.0
        ii, jj = ocean.node_index(blat, blon)
        zlin = np.zeros(n_hours)
        zcatch = np.zeros(n_hours)
        for v in OCEAN_VARS:
            zv = z[v][day_idx, ii, jj]
            zlin += beta[v] * zv
            zcatch += gamma[v] * zv

        deployed = rng.random() < cfg.deployed_frac
        if deployed:
            d0 = int(rng.integers(1, cfg.days - 7))
            start = int(round(d0 * 24 + 8 - blon[d0 * 24] / 15.0))
            soak_origin = float(start)  # hours
            first_set = d0 + 8
            events_raw.append((cfg.start + timedelta(days=d0), buoy, model, EventKind.DEPLOYMENT,
                               (blat[start], blon[start]), None))
        else:
            start = 0
            soak_origin = -rng.uniform(0, 40) * 24.0
            first_set = 4

        # walk the days deciding on sets; each set resets the soak clock
        resets = [soak_origin]
        last_set = -10**6
        for D in range(first_set, cfg.days):
            if D - last_set < 5:
                continue
            hs = int(round(D * 24 + 6 - blon[D * 24] / 15.0))
            soak = (hs - resets[-1]) / 24.0
            level = K * float(colonization(soak, cfg.colon_rate, cfg.colon_mid)) * math.exp(zlin[hs])
            p = min(1.0, cfg.set_rate * (level / cfg.k_median) ** cfg.set_bias) if level > 0 else 0.0
            if rng.random() < p:
                catch = level * math.exp(zcatch[hs]) * math.exp(cfg.catch_sigma * rng.standard_normal())
                events_raw.append((cfg.start + timedelta(days=D), buoy, model, EventKind.SET,
                                   (blat[hs], blon[hs]), round(catch, 2)))
                resets.append(float(hs))
                last_set = D

        alive = hours_rel[start:]
        origin = np.array(resets)[np.searchsorted(resets, alive, side="right") - 1]
        soak = (alive - origin) / 24.0
        eta = np.exp(cfg.daily_sigma * rng.standard_normal(cfg.days + 1))[alive // 24]
        mean_b = (K * colonization(soak, cfg.colon_rate, cfg.colon_mid) * np.exp(zlin[alive])
                  * eta * diurnal_gate(solar_h[alive], cfg.night_level))
        B = mean_b * np.exp(cfg.hourly_sigma * rng.standard_normal(alive.size))
        layers = np.round(B[:, None] * layer_profile(solar_h[alive], cfg.night_level), 4)
        B = layers.sum(axis=1)
        truth_hours[buoy] = h0 + alive
        truth_b[buoy] = B
        truth_layers[buoy] = layers
        truth_mean[buoy] = mean_b
        keep = B >= DETECTION_T
        tracks[buoy] = Track(buoy, (h0 + alive)[keep], blat[alive][keep].copy(),
                             blon[alive][keep].copy(), layers[keep].copy())

    events_raw.sort(key=lambda e: (e[0], e[1], e[3] is EventKind.SET))
    events = [Event(f"E{k:05d}", buoy, model, kind, day, GeoPoint(float(p[0]), float(p[1])), c)
              for k, (day, buoy, model, kind, p, c) in enumerate(events_raw)]
    events, event_truth = _inject(cfg, rng, events, tracks, h0)
    return World(cfg, events, tracks, ocean, bathy, truth_hours, truth_b, truth_layers,
                 truth_mean, event_truth)


def _daytime_hours(ev: Event, track: Track, h0: int):
    """Indices of records on solar day D-1 between 09 and 15 solar time."""
    day = (ev.date - date(1970, 1, 1)).days - 1
    off = ev.position.lon / 15.0
    lo = math.ceil(day * 24 + 9 - off)
    hi = math.floor(day * 24 + 15 - off)
    sl = track.span(lo, hi + 1)
    return np.arange(sl.start, sl.stop)


def _inject(cfg: SynthConfig, rng, events, tracks, h0):
    """Plant rule violations on disjoint events; returns new events and truth."""
    n = len(events)
    want = {r: int(round(cfg.violation_rates.get(r, 0.0) * n)) for r in RULES}
    order = rng.permutation(n)
    taken = {}
    for rule in (5, 4, 3, 1):
        got = 0
        for k in order:
            if got == want[rule]:
                break
            if k in taken:
                continue
            ev = events[k]
            if rule in (4, 5):
                if not ev.is_set:
                    continue
                idx = _daytime_hours(ev, tracks[ev.buoy_id], h0)
                tr = tracks[ev.buoy_id]
                if rule == 5:
                    # need a populated neighbour hour so the jump shows as speed
                    cand = [i for i in idx if (i + 1 < len(tr) and tr.hours[i + 1] == tr.hours[i] + 1)]
                    if not cand:
                        continue
                    i = cand[int(rng.integers(len(cand)))]
                    tr.lat[i] = round(tr.lat[i] + 10.0 / 60.0, 5)
                else:
                    if idx.size == 0:
                        continue
                    i = int(idx[int(rng.integers(idx.size))])
                    tr.lat[i], tr.lon[i] = BANK_NODE
            taken[k] = rule
            got += 1

    out, truth = [], {}
    for k, ev in enumerate(events):
        rule = taken.get(k, 0)
        if rule == 3:
            ev = Event(ev.event_id, ev.buoy_id, ev.buoy_model, ev.kind, ev.date,
                       GeoPoint(*ISLAND_NODE), ev.catch_t)
        elif rule == 1:
            ev = Event(ev.event_id, f"UNK{k:05d}", ev.buoy_model, ev.kind, ev.date,
                       ev.position, ev.catch_t)
        out.append(ev)
        truth[ev.event_id] = (ev.catch_t if ev.is_set else 0.0, rule)
    return out, truth


# -- validation --------------------------------------------------------------

@dataclass
class ValidationReport:
    stats: dict
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def validate(world: World, median_target: float = 30.0, median_tol: float = 0.35,
             censor_tol: float = 0.02) -> ValidationReport:
    """Sanity statistics of a generated world against its configuration."""
    cfg = world.config
    stats, failures = {}, []
    day_b, night_b, censored, expected = [], [], 0, 0.0
    n_hours = 0
    phi = NormalDist().cdf
    for buoy, hrs in world.truth_hours.items():
        lon = world.tracks[buoy].lon if len(world.tracks[buoy]) else np.array([0.0])
        sh = (hrs + float(np.median(lon)) / 15.0) % 24
        b = world.truth_b[buoy]
        day_b.append(b[(sh >= 9) & (sh < 15)])
        night_b.append(b[(sh >= 21) | (sh < 3)])
        censored += int(np.count_nonzero(b < DETECTION_T))
        m = np.maximum(world.truth_mean[buoy], 1e-300)
        expected += sum(phi(x) for x in (-np.log(m) / cfg.hourly_sigma).tolist())
        n_hours += b.size
    day_mean = float(np.concatenate(day_b).mean())
    night_mean = float(np.concatenate(night_b).mean())
    stats["day_mean_b"], stats["night_mean_b"] = day_mean, night_mean
    if not day_mean > night_mean:
        failures.append(f"diurnal: day mean {day_mean:.2f} <= night mean {night_mean:.2f}")

    frac, exp_frac = censored / n_hours, expected / n_hours
    stats["censored_frac"], stats["censored_expected"] = frac, exp_frac
    if abs(frac - exp_frac) > censor_tol:
        failures.append(f"censoring: {frac:.4f} vs analytic {exp_frac:.4f}")

    catches = np.array([e.catch_t for e in world.events if e.is_set])
    n_sets = catches.size
    stats["n_events"], stats["n_sets"] = len(world.events), n_sets
    if n_sets == 0 or n_sets == len(world.events):
        failures.append("class balance: need both sets and deployments")
    else:
        med = float(np.median(catches))
        stats["catch_median"], stats["catch_mean"] = med, float(catches.mean())
        if abs(med / median_target - 1) > median_tol:
            failures.append(f"catch median {med:.1f} not near {median_target}")
        if not catches.mean() > med:
            failures.append("catch distribution not right-skewed")
    truth_y = {e.event_id: (e.catch_t if e.is_set else 0.0) for e in world.events}
    mism = sum(1 for eid, (y, _) in world.event_truth.items() if truth_y[eid] != y)
    stats["label_mismatches"] = mism
    if mism:
        failures.append(f"{mism} ground-truth labels disagree with the logbook")
    return ValidationReport(stats, failures)
