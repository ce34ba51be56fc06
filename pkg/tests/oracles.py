"""Independent reference computations used by the test-suite.

Nothing here imports from ``tunai``; each routine takes a different route
from the production code so agreement is meaningful.
"""
import math
from datetime import datetime, timedelta

import numpy as np

_J2000 = datetime(2000, 1, 1, 12)


def almanac_elevation(lat, lon, t):
    """Solar elevation from the Astronomical Almanac low-precision formulae.

    Uses right ascension and Greenwich mean sidereal time rather than the
    equation of time.
    """
    n = (t - _J2000).total_seconds() / 86400.0
    L = math.radians((280.460 + 0.9856474 * n) % 360.0)
    g = math.radians((357.528 + 0.9856003 * n) % 360.0)
    lam = L + math.radians(1.915) * math.sin(g) + math.radians(0.020) * math.sin(2 * g)
    eps = math.radians(23.439 - 0.0000004 * n)
    ra = math.atan2(math.cos(eps) * math.sin(lam), math.cos(lam))
    dec = math.asin(math.sin(eps) * math.sin(lam))
    gmst_h = (18.697374558 + 24.06570982441908 * n) % 24.0
    lha = math.radians(gmst_h * 15.0 + lon) - ra
    phi = math.radians(lat)
    s = math.sin(phi) * math.sin(dec) + math.cos(phi) * math.cos(dec) * math.cos(lha)
    return math.degrees(math.asin(max(-1.0, min(1.0, s))))


def _bisect(f, a, b, tol_s=0.5):
    fa = f(a)
    while (b - a).total_seconds() > tol_s:
        m = a + (b - a) / 2
        fm = f(m)
        if (fa < 0) == (fm < 0):
            a, fa = m, fm
        else:
            b = m
    return a + (b - a) / 2


def almanac_rise_set(lat, lon, day):
    """Sunrise/sunset (UTC) for local solar day ``day`` by root bracketing.

    Scans the 24 h around local noon at 10-minute steps for -0.833 deg
    crossings, then bisects.  Returns (None, None) if there are none.
    """
    noon = datetime(day.year, day.month, day.day, 12) - timedelta(hours=lon / 15.0)
    f = lambda t: almanac_elevation(lat, lon, t) + 0.833
    rise = sset = None
    step = timedelta(minutes=10)
    t = noon - timedelta(hours=12)
    prev = f(t)
    while t < noon + timedelta(hours=12):
        nxt = t + step
        cur = f(nxt)
        if prev < 0 <= cur and rise is None and nxt <= noon + timedelta(hours=1):
            rise = _bisect(f, t, nxt)
        if prev >= 0 > cur and nxt >= noon - timedelta(hours=1):
            sset = _bisect(f, t, nxt)
        t, prev = nxt, cur
    return rise, sset


def cosine_law_nm(lat1, lon1, lat2, lon2, radius_m=6371008.8):
    """Great-circle distance via the spherical law of cosines (in NM)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius_m * math.acos(max(-1.0, min(1.0, c))) / 1852.0


def pairwise_auc(scores, labels):
    """O(n^2) probability that a positive outranks a negative (ties count 1/2)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def brute_force_max(matrix):
    """Nested-loop max aggregation of a layers x hours array."""
    n_layers, n_hours = len(matrix), len(matrix[0])
    rows = []
    for i in range(n_layers):
        best = -math.inf
        for j in range(n_hours):
            best = max(best, matrix[i][j])
        rows.append(best)
    cols = []
    for j in range(n_hours):
        best = -math.inf
        for i in range(n_layers):
            best = max(best, matrix[i][j])
        cols.append(best)
    return max(rows), rows, cols


def best_split_exhaustive(X, y, impurity, min_leaf=1):
    """Enumerate every (feature, threshold) pair and return the best decrease.

    ``impurity`` maps a label array to a node impurity; decrease is
    n*I(parent) - n_l*I(left) - n_r*I(right).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n = len(y)
    parent = n * impurity(y)
    best = (-math.inf, None, None)
    for j in range(X.shape[1]):
        vals = sorted(set(X[:, j].tolist()))
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = (lo + hi) / 2.0
            left = X[:, j] <= thr
            nl = int(left.sum())
            if nl < min_leaf or n - nl < min_leaf:
                continue
            dec = parent - nl * impurity(y[left]) - (n - nl) * impurity(y[~left])
            if dec > best[0] + 1e-12:
                best = (dec, j, thr)
    return best


def gini(y):
    if len(y) == 0:
        return 0.0
    _, counts = np.unique(y, return_counts=True)
    p = counts / counts.sum()
    return 1.0 - float((p ** 2).sum())


def variance(y):
    return float(np.var(np.asarray(y, dtype=float))) if len(y) else 0.0
