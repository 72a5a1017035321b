"""Scoring of predicted journeys.

Covers Tukey outlier filtering, station-month confidence intervals and how
often predictions land inside them, per-journey RMSE, AIC/BIC order
selection and the four experiment configurations.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data_model import DataSplit, Journey, StationFeatures, TrainMetadata
from .feature_frames import MAX_ORDER, FeatureProfile
from .omlmpf import (ModelRegistry, PredictConfig, PredictionReport, ScoredBatch, TrainParams,
                     journey_key, predict_and_score, train_models)
from .station_knn import KnnConfig

log = logging.getLogger(__name__)

LEVELS = (68, 95, 99)
Z_SCORES = {68: 1.0, 95: 1.96, 99: 2.576}


def tukey_fences(values: Sequence[float]) -> tuple[float, float]:
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75], method="linear")
    iqr = q3 - q1
    return float(q1 - 1.5 * iqr), float(q3 + 1.5 * iqr)


def tukey_filter(values: Sequence[float]) -> list[float]:
    """Drop values outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR]; order is kept."""
    if len(values) == 0:
        raise ValueError("tukey_filter needs at least one value")
    lo, hi = tukey_fences(values)
    return [v for v in values if lo <= v <= hi]


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    level: int
    station: str = ""
    month: int = 0
    sample_n: int = 0

    def __contains__(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def monthly_ci(values: Sequence[float], level: int, mode: str = "spread",
               station: str = "", month: int = 0) -> Interval | None:
    """mean ± z·s (``spread``) or mean ± z·s/√n (``stderr``); None below 2 values."""
    if level not in Z_SCORES:
        raise ValueError(f"level must be one of {LEVELS}")
    if len(values) < 2:
        return None
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    s = float(arr.std(ddof=1))
    if mode == "stderr":
        s /= math.sqrt(arr.size)
    elif mode != "spread":
        raise ValueError("mode must be 'spread' or 'stderr'")
    half = Z_SCORES[level] * s
    return Interval(mean - half, mean + half, level, station, month, arr.size)


IntervalTable = dict[tuple[str, int], dict[int, Interval]]


def train_intervals(journeys: Iterable[Journey], mode: str = "spread") -> IntervalTable:
    """Station-month intervals from all of one train's records, Tukey-filtered."""
    groups: dict[tuple[str, int], list[float]] = defaultdict(list)
    for j in journeys:
        for s in j.stops:
            groups[(s.station_code, s.month)].append(float(s.latemin))
    table: IntervalTable = {}
    for (code, month), vals in sorted(groups.items()):
        kept = tukey_filter(vals)
        cis = {lv: monthly_ci(kept, lv, mode, code, month) for lv in LEVELS}
        if cis[68] is not None:
            table[(code, month)] = cis
    return table


def intervals_by_train(journeys: Iterable[Journey], mode: str = "spread") -> dict[str, IntervalTable]:
    per: dict[str, list[Journey]] = defaultdict(list)
    for j in journeys:
        per[j.train_number].append(j)
    return {t: train_intervals(js, mode) for t, js in sorted(per.items())}


@dataclass
class Coverage:
    per_train: dict[str, dict[int, float]]
    mean: dict[int, float]
    excluded: list[str] = field(default_factory=list)


def ci_coverage(reports: Iterable[PredictionReport],
                intervals: Mapping[str, IntervalTable]) -> Coverage:
    """Percent of predictions inside the matching station-month interval.

    Percentages are computed per train and then averaged unweighted over
    trains. Predictions without a defined interval are left out of the
    denominator; trains with none at all are excluded.
    """
    hits: dict[str, dict[int, int]] = defaultdict(lambda: dict.fromkeys(LEVELS, 0))
    totals: dict[str, int] = defaultdict(int)
    seen = []
    for rep in reports:
        if rep.train_number not in seen:
            seen.append(rep.train_number)
        table = intervals.get(rep.train_number, {})
        month = rep.date.month
        for sp in rep.stations:
            cis = table.get((sp.station_code, month))
            if cis is None:
                continue
            totals[rep.train_number] += 1
            for lv in LEVELS:
                if sp.predicted in cis[lv]:
                    hits[rep.train_number][lv] += 1
    per_train, excluded = {}, []
    for t in sorted(seen):
        if totals[t] == 0:
            log.warning("train %s has no prediction with a defined interval; excluded", t)
            excluded.append(t)
            continue
        per_train[t] = {lv: 100.0 * hits[t][lv] / totals[t] for lv in LEVELS}
    mean = {lv: (float(np.mean([p[lv] for p in per_train.values()])) if per_train else math.nan)
            for lv in LEVELS}
    return Coverage(per_train, mean, excluded)


def journey_rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    err = np.subtract(predicted, actual, dtype=float)
    return float(np.sqrt(np.mean(err * err)))


def mean_rmse_by_train(reports: Iterable[PredictionReport]) -> dict[str, tuple[int, float]]:
    """train -> (number of journeys, mean per-journey RMSE)."""
    per: dict[str, list[float]] = defaultdict(list)
    for r in reports:
        per[r.train_number].append(r.rmse)
    return {t: (len(v), float(np.mean(v))) for t, v in sorted(per.items())}


def global_mean_latemin(journeys: Iterable[Journey]) -> float:
    vals = [s.latemin for j in journeys for s in j.stops]
    return float(np.mean(vals))


def baseline_rmse(journeys: Iterable[Journey], mean: float) -> list[float]:
    """Per-journey RMSE of a constant predictor (0 at the source, ``mean`` elsewhere)."""
    return [journey_rmse([0.0] + [mean] * (len(j) - 1), j.latemins) for j in journeys]


# -- information criteria ---------------------------------------------------

def _check_ic(n_obs, sse, p):
    if n_obs < 1 or sse < 0 or p < 0:
        raise ValueError(f"invalid AIC/BIC inputs n={n_obs}, SSE={sse}, p={p}")


def aic(n_obs: int, sse: float, p: int) -> float:
    _check_ic(n_obs, sse, p)
    if sse == 0:
        return -math.inf
    return n_obs * math.log(sse / n_obs) + 2 * p


def bic(n_obs: int, sse: float, p: int) -> float:
    _check_ic(n_obs, sse, p)
    if sse == 0:
        return -math.inf
    return n_obs * math.log(sse / n_obs) + p * math.log(n_obs)


CRITERIA = {"aic": aic, "bic": bic}


@dataclass(frozen=True)
class OrderSelectionInput:
    train_number: str
    N: int
    n_obs: int
    sse: float
    p: int


@dataclass
class OrderSelection:
    winners: dict[str, int]
    counts: dict[int, int]
    skipped: list[str] = field(default_factory=list)


def select_order(inputs: Iterable[OrderSelectionInput], criterion: str = "bic",
                 orders: Sequence[int] = tuple(range(1, MAX_ORDER + 1))) -> OrderSelection:
    """Per-train argmin of the criterion over N; ties go to the smaller N."""
    score_fn = CRITERIA[criterion]
    scores: dict[str, dict[int, float]] = defaultdict(dict)
    for row in inputs:
        scores[row.train_number][row.N] = score_fn(row.n_obs, row.sse, row.p)
    return select_from_scores(scores, orders)


def select_from_scores(scores: Mapping[str, Mapping[int, float]],
                       orders: Sequence[int] = tuple(range(1, MAX_ORDER + 1))) -> OrderSelection:
    winners, skipped = {}, []
    for t in sorted(scores):
        s = scores[t]
        if any(n not in s for n in orders):
            log.warning("train %s lacks runs for some N; skipped in order selection", t)
            skipped.append(t)
            continue
        winners[t] = min(orders, key=lambda n: (s[n], n))
    counts = {n: sum(1 for w in winners.values() if w == n) for n in orders}
    return OrderSelection(winners, counts, skipped)


def order_inputs(reports: Iterable[PredictionReport], N: int, p: int,
                 registry: ModelRegistry | None = None,
                 n_obs_mode: str = "predictions") -> list[OrderSelectionInput]:
    """Per-train SSE over every predicted stop; n_obs per ``n_obs_mode``.

    ``predictions`` counts the evaluated predictions; ``training`` sums the
    training rows of the distinct models the train's predictions used.
    """
    sse: dict[str, float] = defaultdict(float)
    count: dict[str, int] = defaultdict(int)
    used: dict[str, set] = defaultdict(set)
    for r in reports:
        for sp in r.stations:
            sse[r.train_number] += (sp.predicted - sp.actual) ** 2
            count[r.train_number] += 1
            if sp.order_used:
                used[r.train_number].add((sp.model_station, sp.order_used))
    out = []
    for t in sorted(sse):
        if n_obs_mode == "predictions":
            n = count[t]
        elif n_obs_mode == "training":
            if registry is None:
                raise ValueError("training n_obs needs the registry")
            n = sum(registry.models[k].n_rows for k in used[t]) or count[t]
        else:
            raise ValueError("n_obs_mode must be 'predictions' or 'training'")
        out.append(OrderSelectionInput(t, N, n, sse[t], p))
    return out


# -- experiments ------------------------------------------------------------

EXPERIMENTS = {
    1: (FeatureProfile.CODES, "cv"),
    2: (FeatureProfile.NUMERIC, "unknown_test"),
    3: (FeatureProfile.NUMERIC, "cv"),
    4: (FeatureProfile.NUMERIC, "known_test"),
}


@dataclass
class ExperimentData:
    journeys: list[Journey]
    split: DataSplit
    stations: Mapping[str, StationFeatures]
    trains: Mapping[str, TrainMetadata]

    def eval_set(self, name: str) -> tuple[Journey, ...]:
        return getattr(self.split, name)


@dataclass(frozen=True)
class ExperimentParams:
    train: TrainParams = TrainParams()
    orders: tuple[int, ...] = tuple(range(1, MAX_ORDER + 1))
    kinds: tuple[str, ...] = ("forest", "ridge")
    knn: KnnConfig = KnnConfig()
    ci_mode: str = "spread"
    n_obs_mode: str = "predictions"


@dataclass
class RunResult:
    kind: str
    N: int
    batch: ScoredBatch
    coverage: Coverage
    rmse_by_train: dict[str, tuple[int, float]]
    ic_inputs: list[OrderSelectionInput]


@dataclass
class ExperimentResult:
    exp_id: int
    profile: FeatureProfile
    eval_set: str
    runs: dict[tuple[str, int], RunResult]
    selections: dict[tuple[str, str], OrderSelection]   # (kind, criterion)
    zero_shot_ok: bool


def run_experiment(exp_id: int, data: ExperimentData, params: ExperimentParams = ExperimentParams(),
                   registry: ModelRegistry | None = None) -> ExperimentResult:
    if exp_id not in EXPERIMENTS:
        raise ValueError(f"experiment id must be one of {sorted(EXPERIMENTS)}")
    profile, set_name = EXPERIMENTS[exp_id]
    if registry is None:
        registry = train_models(data.split, data.stations, data.trains, profile, params.train)
    elif registry.profile is not profile:
        raise ValueError(f"experiment {exp_id} needs a {profile.value} registry, "
                         f"got {registry.profile.value}")
    unknown_keys = {journey_key(j.train_number, j.journey_id) for j in data.split.unknown_test}
    zero_shot_ok = not (registry.trained_journeys & unknown_keys)
    if not zero_shot_ok:
        log.error("registry was trained on unknown-train journeys")

    intervals = intervals_by_train(data.journeys, params.ci_mode)
    evaluated = data.eval_set(set_name)
    runs: dict[tuple[str, int], RunResult] = {}
    for kind in params.kinds:
        for N in params.orders:
            cfg = PredictConfig(N=N, model_kind=kind, knn=params.knn)
            batch = predict_and_score(evaluated, registry, cfg, data.stations, data.trains)
            p = registry.feature_width(N)
            runs[(kind, N)] = RunResult(
                kind, N, batch, ci_coverage(batch.reports, intervals),
                mean_rmse_by_train(batch.reports),
                order_inputs(batch.reports, N, p, registry, params.n_obs_mode))
    selections = {}
    for kind in params.kinds:
        inputs = [row for N in params.orders for row in runs[(kind, N)].ic_inputs]
        for crit in CRITERIA:
            selections[(kind, crit)] = select_order(inputs, crit, params.orders)
    return ExperimentResult(exp_id, profile, set_name, runs, selections, zero_shot_ok)


# -- tables -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.4f}"


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def coverage_table(results: Sequence[ExperimentResult]) -> str:
    """Rows 1-OMLMPF..5-OMLMPF; CI68/95/99 columns per (model kind, experiment)."""
    header = ["framework"]
    cols = []
    for kind in ("forest", "ridge"):
        for res in results:
            if any(k == kind for k, _ in res.runs):
                cols.append((kind, res))
                header += [f"{kind}_Exp{res.exp_id}_CI{lv}" for lv in LEVELS]
    orders = sorted({N for res in results for _, N in res.runs})
    rows = [header]
    for N in orders:
        row = [f"{N}-OMLMPF"]
        for kind, res in cols:
            run = res.runs.get((kind, N))
            row += [_fmt(run.coverage.mean[lv]) if run else "" for lv in LEVELS]
        rows.append(row)
    return _csv(rows)


def rmse_table(results: Sequence[ExperimentResult], N: int = 4, kind: str = "forest") -> str:
    """Per-train journey count and mean RMSE for one (kind, N) run of each experiment."""
    rows = [["experiment", "eval_set", "train_number", "n_journeys", "mean_rmse"]]
    for res in results:
        run = res.runs.get((kind, N))
        if run is None:
            continue
        for t, (n, r) in run.rmse_by_train.items():
            rows.append([f"Exp{res.exp_id}", res.eval_set, t, n, _fmt(r)])
    return _csv(rows)


def order_table(results: Sequence[ExperimentResult], kind: str = "forest") -> str:
    """Count of trains whose minimum BIC/AIC run is each N, per experiment."""
    orders = sorted({N for res in results for _, N in res.runs})
    header = ["framework"] + [f"{c.upper()}_Exp{r.exp_id}" for c in ("bic", "aic") for r in results]
    rows = [header]
    for N in orders:
        row = [f"{N}-OMLMPF"]
        for crit in ("bic", "aic"):
            for res in results:
                sel = res.selections.get((kind, crit))
                row.append(sel.counts.get(N, 0) if sel else "")
        rows.append(row)
    return _csv(rows)


def latemins_long(journeys: Iterable[Journey]) -> str:
    """One row per recorded stop: train_number, station, month, value."""
    rows = [["train_number", "station", "month", "value"]]
    for j in journeys:
        for s in j.stops:
            rows.append([j.train_number, s.station_code, s.month, s.latemin])
    return _csv(rows)
