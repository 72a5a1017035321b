"""n-previous-station training frames and their numeric encoding.

A frame for (station, n) holds one row per visit of a known train to that
station with at least ``n`` stations before it. Each row carries the train
and date categories, the codes/late minutes/distances/traffic/degree of the
``n`` previous stations (``Stn_1`` is the immediately previous one) and the
target station's own descriptors. The target is the late minutes at the
station itself.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data_model import DataSplit, Journey, StationFeatures, TrainMetadata, lookup_train

log = logging.getLogger(__name__)

MAX_ORDER = 5
TRAIN_CATEGORICALS = ("train_type", "zone", "month", "weekday")


class FeatureProfile(str, enum.Enum):
    """Which station descriptors enter the encoded vector.

    CODES keeps the previous-station code columns and drops their numeric
    descriptors (dfs, traffic, degree); NUMERIC does the reverse. Late
    minutes, inter-station distances and the target station's own
    descriptors are kept under both.
    """

    CODES = "codes"
    NUMERIC = "numeric"


def check_order(n: int) -> None:
    if not 1 <= n <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}, got {n}")


@dataclass(frozen=True)
class ContextRow:
    train_number: str
    journey_id: str
    train_type: str
    zone: str
    is_superfast: bool
    month: int
    weekday: int
    stn_codes: tuple[str, ...]          # Stn_1 .. Stn_n
    late_mins: tuple[float, ...]
    db: tuple[float, ...]               # db_Stn_{i-1}_Stn_i for i = 1..n
    dfs: tuple[float, ...]
    tfc: tuple[float, ...]
    deg: tuple[float, ...]
    stn0_code: str
    stn0_dfs: float
    stn0_tfc: float
    stn0_deg: float
    target: float | None = None

    @property
    def order(self) -> int:
        return len(self.stn_codes)


class StationLookup:
    """Traffic/degree lookup that defaults unknown stations to 0, warning once."""

    def __init__(self, stations: Mapping[str, StationFeatures]):
        self.stations = stations
        self._warned: set[str] = set()

    def tfc_deg(self, code: str) -> tuple[float, float]:
        s = self.stations.get(code)
        if s is None:
            if code not in self._warned:
                self._warned.add(code)
                log.warning("no station features for %s; traffic and degree default to 0", code)
            return 0.0, 0.0
        return float(s.traffic), float(s.degree)


def make_row(*, train: TrainMetadata, journey_id: str, date, codes: Sequence[str],
             dfs: Sequence[float], late: Sequence[float], pos: int, n: int,
             lookup: StationLookup, target: float | None = None) -> ContextRow:
    """Build the n-prev-stn row for the stop at ``pos`` of a route.

    ``late`` must be filled for positions ``pos - n .. pos - 1``.
    """
    prev = [pos - i for i in range(1, n + 1)]
    tfc_deg = [lookup.tfc_deg(codes[p]) for p in prev]
    t0, d0 = lookup.tfc_deg(codes[pos])
    return ContextRow(
        train_number=train.train_number, journey_id=journey_id,
        train_type=train.train_type, zone=train.zone, is_superfast=train.is_superfast,
        month=date.month, weekday=date.weekday(),
        stn_codes=tuple(codes[p] for p in prev),
        late_mins=tuple(float(late[p]) for p in prev),
        db=tuple(abs(float(dfs[p + 1]) - float(dfs[p])) for p in prev),
        dfs=tuple(float(dfs[p]) for p in prev),
        tfc=tuple(t for t, _ in tfc_deg),
        deg=tuple(d for _, d in tfc_deg),
        stn0_code=codes[pos], stn0_dfs=float(dfs[pos]), stn0_tfc=t0, stn0_deg=d0,
        target=None if target is None else float(target),
    )


def enumerate_contexts(journey: Journey, n: int, trains: Mapping[str, TrainMetadata] | None = None,
                       stations: Mapping[str, StationFeatures] | StationLookup | None = None
                       ) -> list[ContextRow]:
    """All n-prev-stn rows of a journey, using recorded late minutes."""
    check_order(n)
    lookup = stations if isinstance(stations, StationLookup) else StationLookup(stations or {})
    train = lookup_train(trains or {}, journey.train_number)
    codes, dfs, late = journey.stations, journey.distances, journey.latemins
    return [make_row(train=train, journey_id=journey.journey_id, date=journey.date,
                     codes=codes, dfs=dfs, late=late, pos=pos, n=n, lookup=lookup,
                     target=late[pos])
            for pos in range(n, len(codes))]


@dataclass(frozen=True)
class CategoryVocab:
    """Category -> one-hot index, per categorical column."""

    columns: dict[str, dict[str, int]]

    def index(self, column: str, value) -> int | None:
        return self.columns.get(column, {}).get(str(value))

    def size(self, column: str) -> int:
        return len(self.columns.get(column, {}))

    def to_json(self) -> dict:
        return {c: list(m) for c, m in self.columns.items()}

    @classmethod
    def from_json(cls, data: dict) -> "CategoryVocab":
        return cls({c: {v: i for i, v in enumerate(vals)} for c, vals in data.items()})


def _categorical_values(row: ContextRow) -> dict[str, str]:
    out = {"train_type": row.train_type, "zone": row.zone,
           "month": str(row.month), "weekday": str(row.weekday)}
    for i, code in enumerate(row.stn_codes, start=1):
        out[f"Stn_{i}_code"] = code
    return out


def build_vocab(rows: "FeatureFrame | Iterable[ContextRow]") -> CategoryVocab:
    if isinstance(rows, FeatureFrame):
        rows = rows.rows
    seen: dict[str, set[str]] = {}
    for row in rows:
        for col, val in _categorical_values(row).items():
            seen.setdefault(col, set()).add(val)
    return CategoryVocab({c: {v: i for i, v in enumerate(sorted(vals))}
                          for c, vals in sorted(seen.items())})


@dataclass
class FeatureFrame:
    station_code: str
    order: int
    rows: list[ContextRow]
    vocab: CategoryVocab | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def targets(self) -> np.ndarray:
        return np.array([r.target for r in self.rows], dtype=float)

    def matrix(self, profile: FeatureProfile) -> np.ndarray:
        if self.vocab is None:
            self.vocab = build_vocab(self.rows)
        return np.vstack([encode_row(r, profile, self.vocab) for r in self.rows])

    def to_csv(self) -> str:
        return frame_to_csv(self.rows, self.order)


def feature_names(profile: FeatureProfile | str, n: int, vocab: CategoryVocab) -> list[str]:
    """Column names of the encoded vector, in order."""
    profile = FeatureProfile(profile)
    names = []
    for col in TRAIN_CATEGORICALS:
        names += [f"{col}={v}" for v in vocab.columns.get(col, {})]
    names.append("is_superfast")
    for i in range(1, n + 1):
        if profile is FeatureProfile.CODES:
            col = f"Stn_{i}_code"
            names += [f"{col}={v}" for v in vocab.columns.get(col, {})]
        names += [f"late_mins_Stn_{i}", f"db_Stn_{i - 1}_Stn_{i}"]
        if profile is FeatureProfile.NUMERIC:
            names += [f"Stn_{i}_dfs", f"tfc_of_Stn_{i}", f"deg_of_Stn_{i}"]
    names += ["Stn_0_dfs", "Stn_0_tfc", "Stn_0_deg"]
    return names


def encoded_length(profile: FeatureProfile | str, n: int, vocab: CategoryVocab) -> int:
    return len(feature_names(profile, n, vocab))


def encode_row(row: ContextRow, profile: FeatureProfile | str, vocab: CategoryVocab) -> np.ndarray:
    """Numeric vector for one row. Unseen categories give an all-zero block."""
    profile = FeatureProfile(profile)
    cats = _categorical_values(row)
    parts: list[float] = []

    def one_hot(col):
        block = [0.0] * vocab.size(col)
        idx = vocab.index(col, cats[col])
        if idx is not None:
            block[idx] = 1.0
        parts.extend(block)

    for col in TRAIN_CATEGORICALS:
        one_hot(col)
    parts.append(1.0 if row.is_superfast else 0.0)
    for i in range(row.order):
        if profile is FeatureProfile.CODES:
            one_hot(f"Stn_{i + 1}_code")
        parts += [row.late_mins[i], row.db[i]]
        if profile is FeatureProfile.NUMERIC:
            parts += [row.dfs[i], row.tfc[i], row.deg[i]]
    parts += [row.stn0_dfs, row.stn0_tfc, row.stn0_deg]
    return np.array(parts, dtype=float)


def build_station_frames(split: DataSplit, stations: Mapping[str, StationFeatures],
                         trains: Mapping[str, TrainMetadata],
                         n_max: int = MAX_ORDER) -> dict[tuple[str, int], FeatureFrame]:
    """Frames keyed by (station, order) from the training journeys only.

    Empty frames are omitted. Keys come out sorted.
    """
    check_order(n_max)
    lookup = StationLookup(stations)
    rows: dict[tuple[str, int], list[ContextRow]] = {}
    for journey in split.train:
        for n in range(1, n_max + 1):
            for row in enumerate_contexts(journey, n, trains, lookup):
                rows.setdefault((row.stn0_code, n), []).append(row)
    frames = {}
    for key in sorted(rows):
        frame = FeatureFrame(key[0], key[1], rows[key])
        frame.vocab = build_vocab(frame.rows)
        frames[key] = frame
    return frames


def table_columns(n: int) -> list[str]:
    cols = ["train_type", "zone", "is_superfast", "month", "weekday"]
    cols += [f"Stn_{i}_code" for i in range(1, n + 1)]
    cols += [f"late_mins_Stn_{i}" for i in range(1, n + 1)]
    cols += [f"db_Stn_{i - 1}_Stn_{i}" for i in range(1, n + 1)]
    cols += [f"Stn_{i}_dfs" for i in range(1, n + 1)]
    cols += [f"tfc_of_Stn_{i}" for i in range(1, n + 1)]
    cols += [f"deg_of_Stn_{i}" for i in range(1, n + 1)]
    cols += ["Stn_0_dfs", "Stn_0_tfc", "Stn_0_deg", "Stn_0_late_minutes"]
    return cols


def frame_to_csv(rows: Sequence[ContextRow], n: int) -> str:
    """Human-readable dump of a frame with one column per named field."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table_columns(n))
    for r in rows:
        w.writerow([r.train_type, r.zone, str(r.is_superfast).lower(), r.month, r.weekday,
                    *r.stn_codes, *r.late_mins, *r.db, *r.dfs, *r.tfc, *r.deg,
                    r.stn0_dfs, r.stn0_tfc, r.stn0_deg, "" if r.target is None else r.target])
    return buf.getvalue()
