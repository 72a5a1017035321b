"""Synthetic rail network and journey generator.

Delays follow a Markov recursion of configurable order along each route::

    delay[0] = 0
    delay[i] = max(-30, sum_j w_j * f_s * delay[i-j] + congestion(s) + season(month) + noise)

where ``s`` is the station at position ``i``, ``f_s`` an optional per-station
propagation factor, ``congestion(s) = base + alpha*traffic + beta*degree + bias_s``
and ``season`` a cosine peaking in December.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import data_model as dm
from .data_model import Journey, JourneyRecord, StationFeatures, TrainMetadata
from .station_knn import haversine_km

DELAY_FLOOR = -30
DEFAULT_WEIGHTS = {1: (0.9,), 2: (0.5, 0.4), 3: (0.4, 0.3, 0.2)}
ZONES = ("ECR", "ER", "NR", "SER")


@dataclass(frozen=True)
class SimConfig:
    n_stations: int = 60              # pool shared by known trains
    n_trains: int = 20                # known trains
    n_unknown_trains: int = 8
    n_fresh_stations: int = 20        # pool used only by unknown trains
    fresh_per_unknown: int = 3        # minimum fresh stations on an unknown route
    route_length: tuple[int, int] = (8, 14)
    journeys_per_train: tuple[int, int] = (24, 40)
    unknown_journeys_per_train: tuple[int, int] = (2, 6)
    order: int = 1
    weights: tuple[float, ...] | None = None
    propagation_jitter: float = 0.0
    base: float = -2.0
    alpha: float = 0.6
    beta: float = 0.4
    station_sd: float = 3.0
    season_amplitude: float = 6.0
    sigma: float = 2.0
    lat_range: tuple[float, float] = (20.0, 30.0)
    lon_range: tuple[float, float] = (75.0, 88.0)
    start_date: str = "2016-03-01"
    end_date: str = "2018-02-28"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.order <= 3:
            raise ValueError("ground-truth order must be in 1..3")
        if self.sigma < 0 or self.station_sd < 0:
            raise ValueError("noise scales must be >= 0")
        if self.n_trains < 1 or self.n_stations < 2:
            raise ValueError("need at least 1 train and 2 stations")
        lo, hi = self.route_length
        if lo < 2 or hi < lo:
            raise ValueError("route_length must satisfy 2 <= lo <= hi")
        if self.weights is not None and len(self.weights) != self.order:
            raise ValueError("weights must have one entry per order")

    @property
    def kernel(self) -> tuple[float, ...]:
        return tuple(self.weights) if self.weights is not None else DEFAULT_WEIGHTS[self.order]

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_json(cls, d: dict) -> "SimConfig":
        names = {f.name for f in fields(cls)}
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items() if k in names}
        return cls(**kw)


@dataclass
class Network:
    stations: dict[str, StationFeatures]
    routes: dict[str, tuple[str, ...]]
    dfs: dict[str, tuple[float, ...]]
    trains: dict[str, TrainMetadata]
    known_trains: list[str]
    unknown_trains: list[str]
    bias: dict[str, float] = field(default_factory=dict)
    propagation: dict[str, float] = field(default_factory=dict)

    def congestion(self, code: str, cfg: SimConfig) -> float:
        s = self.stations[code]
        return cfg.base + cfg.alpha * s.traffic + cfg.beta * s.degree + self.bias.get(code, 0.0)


def _order_geographically(codes, coords, rng):
    theta = rng.uniform(0, 2 * math.pi)
    direction = (math.cos(theta), math.sin(theta))
    return sorted(codes, key=lambda c: coords[c][0] * direction[0] + coords[c][1] * direction[1])


def _cumulative(route, coords):
    out = [0.0]
    for a, b in zip(route, route[1:]):
        leg = max(round(haversine_km(coords[a], coords[b]), 1), 0.1)
        out.append(round(out[-1] + leg, 1))
    return tuple(out)


def generate_network(cfg: SimConfig) -> Network:
    rng = np.random.default_rng([cfg.seed, 1])
    lo, hi = cfg.route_length
    if hi > cfg.n_stations:
        raise ValueError(f"route length {hi} exceeds the {cfg.n_stations}-station pool")
    if cfg.n_unknown_trains and cfg.fresh_per_unknown > cfg.n_fresh_stations:
        raise ValueError("fresh_per_unknown exceeds n_fresh_stations")
    if cfg.n_unknown_trains and cfg.fresh_per_unknown > hi:
        raise ValueError("fresh_per_unknown exceeds the maximum route length")

    pool = [f"S{i:03d}" for i in range(cfg.n_stations)]
    fresh = [f"U{i:03d}" for i in range(cfg.n_fresh_stations)]
    coords = {}
    for code in pool + fresh:
        coords[code] = (round(float(rng.uniform(*cfg.lat_range)), 5),
                        round(float(rng.uniform(*cfg.lon_range)), 5))

    routes: dict[str, tuple[str, ...]] = {}
    known = [str(12000 + i) for i in range(cfg.n_trains)]
    unknown = [str(15000 + i) for i in range(cfg.n_unknown_trains)]
    for t in known:
        length = int(rng.integers(lo, hi + 1))
        picked = [pool[i] for i in rng.choice(len(pool), size=length, replace=False)]
        routes[t] = tuple(_order_geographically(picked, coords, rng))
    for t in unknown:
        length = int(rng.integers(max(lo, cfg.fresh_per_unknown), hi + 1))
        n_fresh = int(rng.integers(cfg.fresh_per_unknown, min(length, cfg.n_fresh_stations) + 1))
        picked = [fresh[i] for i in rng.choice(len(fresh), size=n_fresh, replace=False)]
        picked += [pool[i] for i in rng.choice(len(pool), size=length - n_fresh, replace=False)]
        routes[t] = tuple(_order_geographically(picked, coords, rng))

    traffic = {c: 0 for c in coords}
    neighbours: dict[str, set[str]] = {c: set() for c in coords}
    for route in routes.values():
        for c in route:
            traffic[c] += 1
        for a, b in zip(route, route[1:]):
            neighbours[a].add(b)
            neighbours[b].add(a)
    stations = {c: StationFeatures(c, coords[c][0], coords[c][1], traffic[c], len(neighbours[c]))
                for c in pool + fresh}
    dfs = {t: _cumulative(r, coords) for t, r in routes.items()}

    trains = {}
    for t in known + unknown:
        trains[t] = TrainMetadata(t, str(rng.choice(dm.TRAIN_TYPES)), str(rng.choice(ZONES)),
                                  bool(rng.random() < 0.4))
    bias = {c: float(rng.normal(0, cfg.station_sd)) for c in pool + fresh}
    propagation = {c: float(1 + rng.uniform(-cfg.propagation_jitter, cfg.propagation_jitter))
                   for c in pool + fresh}
    return Network(stations, routes, dfs, trains, known, unknown, bias, propagation)


def season(month: int, amplitude: float) -> float:
    return amplitude * math.cos(2 * math.pi * (month - 12) / 12)


def _dates(rng, n, start: dt.date, end: dt.date) -> list[dt.date]:
    span = (end - start).days + 1
    n = min(n, span)
    offsets = np.sort(rng.choice(span, size=n, replace=False))
    return [start + dt.timedelta(days=int(o)) for o in offsets]


def generate_journeys(network: Network, cfg: SimConfig) -> list[Journey]:
    rng = np.random.default_rng([cfg.seed, 2])
    start, end = dt.date.fromisoformat(cfg.start_date), dt.date.fromisoformat(cfg.end_date)
    w = cfg.kernel
    journeys = []
    for t in network.known_trains + network.unknown_trains:
        lo, hi = (cfg.journeys_per_train if t in network.known_trains
                  else cfg.unknown_journeys_per_train)
        route, dfs = network.routes[t], network.dfs[t]
        for k, date in enumerate(_dates(rng, int(rng.integers(lo, hi + 1)), start, end)):
            delays = [0]
            for i in range(1, len(route)):
                s = route[i]
                carry = sum(w[j - 1] * delays[i - j] for j in range(1, len(w) + 1) if i - j >= 0)
                raw = (network.propagation.get(s, 1.0) * carry + network.congestion(s, cfg)
                       + season(date.month, cfg.season_amplitude) + rng.normal(0, cfg.sigma))
                delays.append(max(DELAY_FLOOR, int(round(raw))))
            jid = f"{t}-{k:03d}"
            stops = tuple(JourneyRecord(t, jid, date, route[i], delays[i], dfs[i])
                          for i in range(len(route)))
            journeys.append(Journey(t, jid, stops))
    return journeys


def simulate(cfg: SimConfig) -> tuple[Network, list[Journey]]:
    net = generate_network(cfg)
    return net, generate_journeys(net, cfg)


def write_dataset(out_dir: str | Path, network: Network, journeys: list[Journey],
                  cfg: SimConfig) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "journeys.csv": dm.write_journeys(journeys),
        "stations.csv": dm.write_station_features(network.stations),
        "trains.csv": dm.write_train_metadata(network.trains),
        "scenario.json": json.dumps({"config": cfg.to_json(),
                                     "known_trains": network.known_trains,
                                     "unknown_trains": network.unknown_trains},
                                    indent=2, sort_keys=True) + "\n",
    }
    written = []
    for name, text in paths.items():
        (out / name).write_text(text)
        written.append(out / name)
    return written
