"""Two-step nearest known station search.

Step one keeps the ``k`` candidates geographically closest to the target
(great-circle distance). Step two ranks those by Euclidean distance in
z-scored (degree, traffic) space, standardized over the step-one set. Exact
ties are broken by station code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .data_model import StationFeatures

EARTH_RADIUS_KM = 6371.0


class UnpredictableStation(LookupError):
    """The target has no coordinates, so no similar station can be found."""


@dataclass(frozen=True)
class KnnConfig:
    k: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class KnnMatch:
    station: str
    geo_km: float
    profile_dist: float


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _zscore(values: list[float]) -> tuple[float, float]:
    mean = sum(values) / len(values)
    sd = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    return mean, sd if sd > 0 else 1.0


def rank_known(target: str, candidates: Iterable[str], features: Mapping[str, StationFeatures],
               cfg: KnnConfig = KnnConfig()) -> list[KnnMatch]:
    """Step-one neighbours of ``target`` ordered by step-two distance."""
    tf = features.get(target)
    if tf is None or not tf.has_coordinates:
        raise UnpredictableStation(f"station {target!r} has no coordinates")
    pool = sorted({c for c in candidates
                   if c in features and features[c].has_coordinates})
    if not pool:
        raise ValueError("no candidate stations with coordinates")
    here = (tf.latitude, tf.longitude)
    geo = sorted(((haversine_km(here, (features[c].latitude, features[c].longitude)), c)
                  for c in pool))[:cfg.k]
    _, deg_sd = _zscore([features[c].degree for _, c in geo])
    _, tfc_sd = _zscore([features[c].traffic for _, c in geo])
    ranked = []
    for km, c in geo:
        f = features[c]
        # difference before scaling: the means cancel, and mirrored ties stay exact
        dist = math.hypot((f.degree - tf.degree) / deg_sd, (f.traffic - tf.traffic) / tfc_sd)
        ranked.append((dist, c, km))
    ranked.sort()
    return [KnnMatch(c, km, dist) for dist, c, km in ranked]


def nearest_known(target: str, candidates: Iterable[str], features: Mapping[str, StationFeatures],
                  cfg: KnnConfig = KnnConfig()) -> str:
    """The most similar station among ``candidates``."""
    return rank_known(target, candidates, features, cfg)[0].station
