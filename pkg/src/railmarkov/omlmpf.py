"""Per-station model training and feed-forward journey prediction.

Training fits a forest and a ridge model on every non-empty (station, order)
frame and records, per order, which stations own a model of that order.
Prediction walks a route from the source, forcing 0 late minutes there, and
predicts each later stop with a model of order ``min(position, N)`` fed with
the late minutes already *predicted* for the previous stops. A stop whose
station owns no model of that order borrows the model of the most similar
station that does.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import data_model as dm
from .data_model import DataSplit, Journey, StationFeatures, TrainMetadata
from .feature_frames import (MAX_ORDER, CategoryVocab, FeatureProfile, StationLookup,
                             build_station_frames, check_order, encode_row, make_row)
from .regressors import Forest, ForestParams, RidgeModel, fit_forest, fit_ridge
from .station_knn import KnnConfig, UnpredictableStation, rank_known

log = logging.getLogger(__name__)

ARCHIVE_VERSION = "railmarkov-model/1"
MODEL_KINDS = ("forest", "ridge")


class PredictionError(RuntimeError):
    """A journey cannot be predicted; ``positions`` lists the offending stops."""

    def __init__(self, message: str, positions: Sequence[int] = ()):
        super().__init__(message)
        self.positions = list(positions)


def journey_key(train_number: str, journey_id: str) -> str:
    return f"{train_number}/{journey_id}"


@dataclass(frozen=True)
class TrainParams:
    forest: ForestParams = ForestParams()
    ridge_lambda: float = 1.0
    n_max: int = MAX_ORDER

    def to_json(self) -> dict:
        return {"forest": asdict(self.forest), "ridge_lambda": self.ridge_lambda,
                "n_max": self.n_max}

    @classmethod
    def from_json(cls, d: dict) -> "TrainParams":
        return cls(ForestParams(**d["forest"]), float(d["ridge_lambda"]), int(d["n_max"]))


@dataclass
class StationModel:
    station: str
    order: int
    profile: FeatureProfile
    vocab: CategoryVocab
    forest: Forest
    ridge: RidgeModel
    n_rows: int

    @property
    def n_features(self) -> int:
        return self.forest.n_features

    def predict(self, x: np.ndarray, kind: str) -> float:
        if kind == "forest":
            return float(self.forest.predict(x)[0])
        if kind == "ridge":
            return float(self.ridge.predict(x)[0])
        raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class ModelRegistry:
    profile: FeatureProfile
    models: dict[tuple[str, int], StationModel]
    ips_lists: dict[int, frozenset[str]]
    params: TrainParams
    trained_journeys: frozenset[str] = frozenset()
    split_params: dict = field(default_factory=dict)

    @property
    def max_order(self) -> int:
        return max((o for o, s in self.ips_lists.items() if s), default=0)

    def feature_width(self, order: int) -> int:
        """Widest encoded vector among the order-``order`` models."""
        return max((m.n_features for (_, o), m in self.models.items() if o == order), default=0)


def train_models(split: DataSplit, stations: Mapping[str, StationFeatures],
                 trains: Mapping[str, TrainMetadata], profile: FeatureProfile | str,
                 params: TrainParams = TrainParams()) -> ModelRegistry:
    profile = FeatureProfile(profile)
    frames = build_station_frames(split, stations, trains, params.n_max)
    if not frames:
        raise ValueError("no non-empty training frame; nothing to train")
    models = {}
    ips: dict[int, set[str]] = {i: set() for i in range(1, MAX_ORDER + 1)}
    for key, frame in frames.items():
        X = frame.matrix(profile)
        y = frame.targets()
        forest = fit_forest(X, y, params.forest)
        ridge = fit_ridge(X, y, params.ridge_lambda)
        models[key] = StationModel(key[0], key[1], profile, frame.vocab, forest, ridge, len(frame))
        ips[key[1]].add(key[0])
    log.info("trained %d station models: %s", len(models),
             ", ".join(f"{i}ps={len(s)}" for i, s in ips.items()))
    trained = frozenset(journey_key(j.train_number, j.journey_id) for j in split.train)
    return ModelRegistry(profile, models, {i: frozenset(s) for i, s in ips.items()}, params,
                         trained, dict(split.params))


# -- prediction ------------------------------------------------------------

@dataclass(frozen=True)
class PredictConfig:
    N: int = 3
    model_kind: str = "forest"
    knn: KnnConfig = KnnConfig()

    def __post_init__(self):
        check_order(self.N)
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")


@dataclass(frozen=True)
class Route:
    train_number: str
    journey_id: str
    date: dt.date
    stations: tuple[str, ...]
    dfs: tuple[float, ...]
    actual: tuple[float, ...] | None = None

    @classmethod
    def from_journey(cls, j: Journey) -> "Route":
        return cls(j.train_number, j.journey_id, j.date, j.stations, j.distances,
                   tuple(float(x) for x in j.latemins))


@dataclass(frozen=True)
class StationPrediction:
    position: int
    station_code: str
    order_used: int          # 0 at the source
    model_station: str       # "" at the source
    predicted: float
    actual: float | None = None
    fallback: bool = False
    geo_km: float | None = None
    profile_dist: float | None = None


@dataclass
class PredictionReport:
    train_number: str
    journey_id: str
    date: dt.date
    stations: list[StationPrediction]

    @property
    def lms(self) -> list[float]:
        return [s.predicted for s in self.stations]

    @property
    def actuals(self) -> list[float] | None:
        if any(s.actual is None for s in self.stations):
            return None
        return [s.actual for s in self.stations]

    @property
    def rmse(self) -> float | None:
        act = self.actuals
        if act is None:
            return None
        err = np.subtract(self.lms, act)
        return float(np.sqrt(np.mean(err * err)))

    @property
    def fallbacks(self) -> list[StationPrediction]:
        return [s for s in self.stations if s.fallback]


def unpredictable_positions(route: Route, registry: ModelRegistry, cfg: PredictConfig,
                            stations: Mapping[str, StationFeatures]) -> list[int]:
    """Positions whose station has neither its own model nor coordinates."""
    bad = []
    for i in range(1, len(route.stations)):
        m = min(i, cfg.N)
        code = route.stations[i]
        if code in registry.ips_lists.get(m, ()):
            continue
        feat = stations.get(code)
        if feat is None or not feat.has_coordinates:
            bad.append(i)
    return bad


def predict_journey(route: Route, registry: ModelRegistry, cfg: PredictConfig,
                    stations: Mapping[str, StationFeatures],
                    trains: Mapping[str, TrainMetadata]) -> PredictionReport:
    if len(route.stations) < 2:
        raise PredictionError("route needs at least 2 stations")
    if len(route.dfs) != len(route.stations):
        raise PredictionError("route distances and stations differ in length")
    if cfg.N > registry.max_order:
        raise ValueError(f"N={cfg.N} exceeds the highest trained order {registry.max_order}")
    for m in range(1, min(cfg.N, len(route.stations) - 1) + 1):
        if not registry.ips_lists.get(m):
            raise PredictionError(f"no station has an order-{m} model")
    bad = unpredictable_positions(route, registry, cfg, stations)
    if bad:
        raise PredictionError(
            "unpredictable stations (no own model and no coordinates) at positions "
            + ", ".join(f"{i} ({route.stations[i]})" for i in bad), bad)

    train = dm.lookup_train(trains, route.train_number)
    lookup = StationLookup(stations)
    actual = route.actual
    lms = [0.0]
    out = [StationPrediction(0, route.stations[0], 0, "", 0.0,
                             None if actual is None else actual[0])]
    for i in range(1, len(route.stations)):
        m = min(i, cfg.N)
        code = route.stations[i]
        geo = dist = None
        if code in registry.ips_lists[m]:
            model_station = code
        else:
            try:
                match = rank_known(code, registry.ips_lists[m], stations, cfg.knn)[0]
            except UnpredictableStation as exc:
                raise PredictionError(str(exc), [i]) from None
            model_station, geo, dist = match.station, match.geo_km, match.profile_dist
            log.debug("position %d: %s uses order-%d model of %s (%.1f km, %.3f)",
                      i, code, m, model_station, geo, dist)
        model = registry.models[(model_station, m)]
        row = make_row(train=train, journey_id=route.journey_id, date=route.date,
                       codes=route.stations, dfs=route.dfs, late=lms, pos=i, n=m,
                       lookup=lookup)
        pred = model.predict(encode_row(row, registry.profile, model.vocab), cfg.model_kind)
        lms.append(pred)
        out.append(StationPrediction(i, code, m, model_station, pred,
                                     None if actual is None else actual[i],
                                     model_station != code, geo, dist))
    return PredictionReport(route.train_number, route.journey_id, route.date, out)


@dataclass
class ScoredBatch:
    reports: list[PredictionReport]
    errors: list[tuple[str, str]]    # (journey key, message)

    @property
    def mean_rmse(self) -> float:
        vals = [r.rmse for r in self.reports]
        return float(np.mean(vals)) if vals else math.nan


def predict_and_score(journeys: Iterable[Journey], registry: ModelRegistry, cfg: PredictConfig,
                      stations: Mapping[str, StationFeatures],
                      trains: Mapping[str, TrainMetadata]) -> ScoredBatch:
    reports, errors = [], []
    for j in journeys:
        try:
            reports.append(predict_journey(Route.from_journey(j), registry, cfg, stations, trains))
        except PredictionError as exc:
            log.warning("journey %s of train %s not predicted: %s", j.journey_id,
                        j.train_number, exc)
            errors.append((journey_key(j.train_number, j.journey_id), str(exc)))
    return ScoredBatch(reports, errors)


# -- archive ---------------------------------------------------------------

def _safe(code: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", lambda m: f"%{ord(m.group()):02X}", code)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def save_registry(registry: ModelRegistry, directory: str | Path,
                  stations: Mapping[str, StationFeatures] | None = None,
                  trains: Mapping[str, TrainMetadata] | None = None) -> Path:
    """Write ``manifest.json`` plus one JSON file per (station, order, kind).

    Station features and train metadata are copied alongside when given so
    that the archive alone suffices for prediction.
    """
    root = Path(directory)
    (root / "models").mkdir(parents=True, exist_ok=True)
    entries = []
    for (code, order), model in sorted(registry.models.items()):
        stem = f"{_safe(code)}__{order}"
        files = {"vocab": f"models/{stem}__vocab.json",
                 "forest": f"models/{stem}__forest.json",
                 "ridge": f"models/{stem}__ridge.json"}
        _dump(root / files["vocab"], model.vocab.to_json())
        _dump(root / files["forest"], {"version": ARCHIVE_VERSION, "kind": "forest",
                                       **model.forest.to_json()})
        _dump(root / files["ridge"], {"version": ARCHIVE_VERSION, "kind": "ridge",
                                      **model.ridge.to_json()})
        entries.append({"station": code, "order": order, "n_rows": model.n_rows,
                        "n_features": model.n_features, "files": files})
    manifest = {
        "version": ARCHIVE_VERSION,
        "profile": registry.profile.value,
        "orders": sorted(o for o, s in registry.ips_lists.items() if s),
        "ips_lists": {str(o): sorted(s) for o, s in sorted(registry.ips_lists.items())},
        "params": registry.params.to_json(),
        "split": registry.split_params,
        "trained_journeys": sorted(registry.trained_journeys),
        "models": entries,
    }
    _dump(root / "manifest.json", manifest)
    if stations is not None:
        (root / "stations.csv").write_text(dm.write_station_features(stations))
    if trains is not None:
        (root / "trains.csv").write_text(dm.write_train_metadata(trains))
    return root / "manifest.json"


def manifest_hash(directory: str | Path) -> str:
    return hashlib.sha256((Path(directory) / "manifest.json").read_bytes()).hexdigest()


def load_registry(directory: str | Path) -> ModelRegistry:
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("version") != ARCHIVE_VERSION:
        raise ValueError(f"unsupported archive version {manifest.get('version')!r}")
    profile = FeatureProfile(manifest["profile"])
    models = {}
    for e in manifest["models"]:
        files = e["files"]
        vocab = CategoryVocab.from_json(json.loads((root / files["vocab"]).read_text()))
        forest = Forest.from_json(json.loads((root / files["forest"]).read_text()))
        ridge = RidgeModel.from_json(json.loads((root / files["ridge"]).read_text()))
        models[(e["station"], int(e["order"]))] = StationModel(
            e["station"], int(e["order"]), profile, vocab, forest, ridge, int(e["n_rows"]))
    ips = {int(o): frozenset(s) for o, s in manifest["ips_lists"].items()}
    return ModelRegistry(profile, models, ips, TrainParams.from_json(manifest["params"]),
                         frozenset(manifest["trained_journeys"]), manifest["split"])
