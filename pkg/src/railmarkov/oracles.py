"""Naive reference computations for cross-checking the main code paths.

Everything here is deliberately plain Python over lists and tuples, and
imports nothing from the rest of the package.
"""

import math


def context_count(n_stops, n):
    """Number of stops with at least ``n`` predecessors, by walking indices."""
    count = 0
    for pos in range(n_stops):
        predecessors = 0
        for _ in range(pos):
            predecessors += 1
        if pos > 0 and predecessors >= n:
            count += 1
    return count


def stations_with_order(routes, n):
    """Stations that appear at index >= n on some route."""
    found = set()
    for route in routes:
        for i, code in enumerate(route):
            if i >= n:
                found.add(code)
    return found


def rmse(predicted, actual):
    total = 0.0
    for p, a in zip(predicted, actual):
        total += (p - a) * (p - a)
    return math.sqrt(total / len(predicted))


def quantile7(values, q):
    xs = sorted(values)
    h = (len(xs) - 1) * q
    lo = int(math.floor(h))
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def tukey(values):
    q1 = quantile7(values, 0.25)
    q3 = quantile7(values, 0.75)
    spread = q3 - q1
    return [v for v in values if q1 - 1.5 * spread <= v <= q3 + 1.5 * spread]


def spread_interval(values, z):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean - z * math.sqrt(var), mean + z * math.sqrt(var)


def coverage(predictions, records, z):
    """Mean over trains of percent predictions inside their station-month interval.

    predictions: (train, station, month, value) tuples
    records:     (train, station, month, latemin) tuples (all of a train's data)
    """
    groups = {}
    for train, station, month, value in records:
        groups.setdefault((train, station, month), []).append(value)
    bounds = {}
    for key, vals in groups.items():
        kept = tukey(vals)
        if len(kept) >= 2:
            bounds[key] = spread_interval(kept, z)
    inside, total = {}, {}
    for train, station, month, value in predictions:
        b = bounds.get((train, station, month))
        if b is None:
            continue
        total[train] = total.get(train, 0) + 1
        if b[0] <= value <= b[1]:
            inside[train] = inside.get(train, 0) + 1
    pcts = [100.0 * inside.get(t, 0) / total[t] for t in total]
    return sum(pcts) / len(pcts) if pcts else float("nan")


def great_circle(lat1, lon1, lat2, lon2, radius=6371.0):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * radius * math.asin(min(1.0, math.sqrt(a)))


def two_step_nearest(target, candidates, k):
    """target: (lat, lon, degree, traffic); candidates: {code: same tuple}."""
    by_geo = sorted(candidates, key=lambda c: (great_circle(target[0], target[1],
                                                            candidates[c][0], candidates[c][1]), c))
    near = by_geo[:k]

    def mean_sd(idx):
        vals = [candidates[c][idx] for c in near]
        m = sum(vals) / len(vals)
        sd = math.sqrt(sum((v - m) ** 2 for v in vals) / len(vals))
        return m, (sd if sd > 0 else 1.0)

    _, ds = mean_sd(2)
    _, ts = mean_sd(3)

    def dist(c):
        dd = (candidates[c][2] - target[2]) / ds
        dt = (candidates[c][3] - target[3]) / ts
        return math.sqrt(dd * dd + dt * dt)

    return min(near, key=lambda c: (dist(c), c))


def aic(n, sse, p):
    return n * math.log(sse / n) + 2 * p


def bic(n, sse, p):
    return n * math.log(sse / n) + p * math.log(n)


def split_counts(journeys, min_count, cutoff):
    """journeys: (train, date) tuples -> (#known cv, #known test, #unknown)."""
    per = {}
    for train, _ in journeys:
        per[train] = per.get(train, 0) + 1
    known = {t for t, c in per.items() if c >= min_count}
    cv = test = unknown = 0
    for train, date in journeys:
        if train not in known:
            unknown += 1
        elif date <= cutoff:
            cv += 1
        else:
            test += 1
    return cv, test, unknown
