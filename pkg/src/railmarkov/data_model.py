"""Journey, station and train records: CSV parsing, serialization and splits.

Three input files are understood::

    journeys.csv  train_number,journey_id,actarr_date,station_code,latemin,distance_km
    stations.csv  station_code,latitude,longitude,traffic,degree
    trains.csv    train_number,train_type,zone,is_superfast
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

JOURNEY_HEADER = ("train_number", "journey_id", "actarr_date", "station_code",
                  "latemin", "distance_km")
STATION_HEADER = ("station_code", "latitude", "longitude", "traffic", "degree")
TRAIN_HEADER = ("train_number", "train_type", "zone", "is_superfast")
TRAIN_TYPES = ("Special", "Express", "Other")


class DataError(ValueError):
    """Raised for malformed or inconsistent input data.

    ``line`` is the 1-based line number in the source file when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class JourneyRecord:
    train_number: str
    journey_id: str
    actarr_date: dt.date
    station_code: str
    latemin: int
    distance_km: float

    @property
    def month(self) -> int:
        return self.actarr_date.month

    @property
    def weekday(self) -> int:
        # Monday == 0
        return self.actarr_date.weekday()


@dataclass(frozen=True)
class Journey:
    train_number: str
    journey_id: str
    stops: tuple[JourneyRecord, ...]

    @property
    def date(self) -> dt.date:
        """Journey start date; month and weekday features come from here."""
        return self.stops[0].actarr_date

    @property
    def stations(self) -> tuple[str, ...]:
        return tuple(s.station_code for s in self.stops)

    @property
    def distances(self) -> tuple[float, ...]:
        return tuple(s.distance_km for s in self.stops)

    @property
    def latemins(self) -> tuple[int, ...]:
        return tuple(s.latemin for s in self.stops)

    def __len__(self) -> int:
        return len(self.stops)


@dataclass(frozen=True)
class StationFeatures:
    station_code: str
    latitude: float | None
    longitude: float | None
    traffic: int
    degree: int

    @property
    def has_coordinates(self) -> bool:
        return self.latitude is not None and self.longitude is not None


@dataclass(frozen=True)
class TrainMetadata:
    train_number: str
    train_type: str = "Other"
    zone: str = "UNK"
    is_superfast: bool = False


@dataclass(frozen=True)
class DataSplit:
    """Known/unknown train segregation with a time cutoff for known trains.

    ``train`` and ``cv`` partition ``known_train_cv`` at journey granularity.
    """

    known_train_cv: tuple[Journey, ...]
    train: tuple[Journey, ...]
    cv: tuple[Journey, ...]
    known_test: tuple[Journey, ...]
    unknown_test: tuple[Journey, ...]
    known_trains: frozenset[str]
    known_stations: frozenset[str]
    params: dict = field(default_factory=dict, compare=False)

    @property
    def unknown_trains(self) -> frozenset[str]:
        return frozenset(j.train_number for j in self.unknown_test)


def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    # binary file-like
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _rows(source, header: Sequence[str]):
    """Yield (line_number, row_dict) pairs after checking the header."""
    reader = csv.reader(_text_stream(source))
    try:
        first = next(reader)
    except StopIteration:
        return
    got = tuple(c.strip() for c in first)
    if got != tuple(header):
        raise DataError(f"expected header {','.join(header)!r}, got {','.join(got)!r}", 1)
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
        yield reader.line_num, dict(zip(header, (c.strip() for c in row)))


def parse_date(text: str, line: int | None = None) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise DataError(f"malformed date {text!r} (expected YYYY-MM-DD)", line) from None


def _number(text, kind, name, line):
    try:
        return kind(text)
    except ValueError:
        raise DataError(f"malformed {name} {text!r}", line) from None


def parse_journeys(source) -> list[Journey]:
    """Group journey rows by (train_number, journey_id), keeping file order."""
    groups: OrderedDict[tuple[str, str], list[JourneyRecord]] = OrderedDict()
    for line, row in _rows(source, JOURNEY_HEADER):
        if not row["station_code"]:
            raise DataError("empty station_code", line)
        date = parse_date(row["actarr_date"], line)
        latemin = _number(row["latemin"], int, "latemin", line)
        dist = _number(row["distance_km"], float, "distance_km", line)
        if not np.isfinite(dist) or dist < 0:
            raise DataError(f"negative or non-finite distance_km {row['distance_km']!r}", line)
        key = (row["train_number"], row["journey_id"])
        rec = JourneyRecord(row["train_number"], row["journey_id"], date,
                            row["station_code"], latemin, dist)
        stops = groups.setdefault(key, [])
        if stops:
            if dist < stops[-1].distance_km:
                raise DataError("distance_km decreases within journey", line)
        elif dist != 0:
            raise DataError("first stop of a journey must have distance_km 0", line)
        stops.append(rec)
    return [Journey(k[0], k[1], tuple(stops)) for k, stops in groups.items()]


def parse_station_features(source) -> dict[str, StationFeatures]:
    out: dict[str, StationFeatures] = {}
    for line, row in _rows(source, STATION_HEADER):
        code = row["station_code"]
        if not code:
            raise DataError("empty station_code", line)
        if code in out:
            raise DataError(f"duplicate station_code {code!r}", line)
        lat = _number(row["latitude"], float, "latitude", line) if row["latitude"] else None
        lon = _number(row["longitude"], float, "longitude", line) if row["longitude"] else None
        if lat is not None and not -90 <= lat <= 90:
            raise DataError(f"latitude {lat} out of [-90, 90]", line)
        if lon is not None and not -180 <= lon <= 180:
            raise DataError(f"longitude {lon} out of [-180, 180]", line)
        traffic = _number(row["traffic"], int, "traffic", line)
        degree = _number(row["degree"], int, "degree", line)
        if traffic < 0 or degree < 0:
            raise DataError("traffic and degree must be non-negative", line)
        out[code] = StationFeatures(code, lat, lon, traffic, degree)
    return out


def _parse_bool(text: str, line: int) -> bool:
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise DataError(f"is_superfast must be true or false, got {text!r}", line)


def parse_train_metadata(source) -> dict[str, TrainMetadata]:
    out: dict[str, TrainMetadata] = {}
    for line, row in _rows(source, TRAIN_HEADER):
        num = row["train_number"]
        if num in out:
            raise DataError(f"duplicate train_number {num!r}", line)
        if row["train_type"] not in TRAIN_TYPES:
            raise DataError(f"train_type must be one of {TRAIN_TYPES}, got {row['train_type']!r}", line)
        out[num] = TrainMetadata(num, row["train_type"], row["zone"] or "UNK",
                                 _parse_bool(row["is_superfast"], line))
    return out


_warned_trains: set[str] = set()


def lookup_train(trains: Mapping[str, TrainMetadata], train_number: str) -> TrainMetadata:
    """Metadata for a train, defaulting unlisted trains (warned once per train)."""
    meta = trains.get(train_number)
    if meta is not None:
        return meta
    if train_number not in _warned_trains:
        _warned_trains.add(train_number)
        log.warning("no metadata for train %s; using defaults (Other, UNK, not superfast)",
                    train_number)
    return TrainMetadata(train_number)


# -- serialization ---------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


def write_journeys(journeys: Iterable[Journey]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(JOURNEY_HEADER)
    for j in journeys:
        for s in j.stops:
            w.writerow([s.train_number, s.journey_id, s.actarr_date.isoformat(),
                        s.station_code, s.latemin, _fmt_float(s.distance_km)])
    return buf.getvalue()


def write_station_features(stations: Mapping[str, StationFeatures]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATION_HEADER)
    for s in stations.values():
        w.writerow([s.station_code,
                    "" if s.latitude is None else repr(float(s.latitude)),
                    "" if s.longitude is None else repr(float(s.longitude)),
                    s.traffic, s.degree])
    return buf.getvalue()


def write_train_metadata(trains: Mapping[str, TrainMetadata]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAIN_HEADER)
    for t in trains.values():
        w.writerow([t.train_number, t.train_type, t.zone, str(t.is_superfast).lower()])
    return buf.getvalue()


# -- segregation -----------------------------------------------------------

def segregate(journeys: Sequence[Journey], known_trains: Iterable[str] | None = None,
              min_journey_count: int | None = None,
              cv_cutoff_date: dt.date | str = dt.date(2017, 6, 30),
              holdout_ratio: float = 0.2, seed: int = 0) -> DataSplit:
    """Split journeys into known-train train/cv/test and unknown-train test sets.

    Known trains are either listed explicitly or are those with at least
    ``min_journey_count`` journeys. Known journeys dated on or before the
    cutoff are shuffled per train (seeded) and split ``1 - holdout_ratio`` :
    ``holdout_ratio`` into train and cv; later ones form the known test set.
    """
    if (known_trains is None) == (min_journey_count is None):
        raise ValueError("give exactly one of known_trains or min_journey_count")
    if not 0 <= holdout_ratio < 1:
        raise ValueError("holdout_ratio must be in [0, 1)")
    if isinstance(cv_cutoff_date, str):
        cv_cutoff_date = parse_date(cv_cutoff_date)

    by_train: OrderedDict[str, list[Journey]] = OrderedDict()
    for j in journeys:
        if len(j) < 2:
            log.warning("dropping single-stop journey %s of train %s", j.journey_id, j.train_number)
            continue
        by_train.setdefault(j.train_number, []).append(j)

    if known_trains is None:
        known = {t for t, js in by_train.items() if len(js) >= min_journey_count}
    else:
        known = set(known_trains) & set(by_train)
    if not known:
        raise DataError("no known trains selected")

    rng = np.random.default_rng(seed)
    cv_all, train, cv, test, unknown = [], [], [], [], []
    for t in sorted(by_train):
        js = sorted(by_train[t], key=lambda j: (j.date, j.journey_id))
        if t not in known:
            unknown.extend(js)
            continue
        early = [j for j in js if j.date <= cv_cutoff_date]
        test.extend(j for j in js if j.date > cv_cutoff_date)
        cv_all.extend(early)
        perm = rng.permutation(len(early))
        n_cv = int(round(len(early) * holdout_ratio))
        n_cv = min(n_cv, max(len(early) - 1, 0))
        held = set(perm[:n_cv].tolist())
        for i, j in enumerate(early):
            (cv if i in held else train).append(j)
    if not train:
        raise DataError(f"cutoff {cv_cutoff_date} leaves no known-train journeys for training")

    stations = frozenset(s for j in cv_all + test for s in j.stations)
    params = {
        "known_trains": sorted(known),
        "cv_cutoff_date": cv_cutoff_date.isoformat(),
        "holdout_ratio": holdout_ratio,
        "seed": seed,
    }
    return DataSplit(tuple(cv_all), tuple(train), tuple(cv), tuple(test), tuple(unknown),
                     frozenset(known), stations, params)
