"""Command line entry point: ``railmarkov simulate|train|predict|evaluate``.

Exit codes: 0 success, 1 runtime failure, 2 usage or missing input.
Settings can come from ``--config`` (TOML or JSON); explicit flags win.
A config may hold top-level keys and per-command tables, e.g.::

    seed = 7
    [train]
    profile = "numeric"
    trees = 50
"""

from __future__ import annotations

import argparse
import dataclasses
import csv
import datetime as dt
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import data_model as dm
from . import evaluation as ev
from . import plotting
from .feature_frames import MAX_ORDER, FeatureProfile
from .omlmpf import (PredictConfig, PredictionError, Route, TrainParams, load_registry,
                     manifest_hash, predict_journey, save_registry, train_models,
                     unpredictable_positions)
from .railsim import SimConfig, simulate, write_dataset
from .regressors import ForestParams
from .station_knn import KnnConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("railmarkov")


COMMANDS = ("simulate", "train", "predict", "evaluate")


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    text = p.read_text()
    if p.suffix == ".json":
        return json.loads(text)
    return tomllib.loads(text)


def _read(path: Path, what: str) -> bytes:
    if not path.is_file():
        raise UsageError(f"missing {what}: {path}")
    return path.read_bytes()


def _data_paths(args) -> tuple[Path, Path, Path]:
    base = Path(args.data) if args.data else None

    def pick(explicit, name):
        if explicit:
            return Path(explicit)
        if base is None:
            raise UsageError(f"give --data or --{name}")
        return base / f"{name}.csv"

    return pick(args.journeys, "journeys"), pick(args.stations, "stations"), pick(args.trains, "trains")


def _load_dataset(args):
    jp, sp, tp = _data_paths(args)
    journeys = dm.parse_journeys(_read(jp, "journeys file"))
    stations = dm.parse_station_features(_read(sp, "stations file"))
    trains = dm.parse_train_metadata(_read(tp, "trains file"))
    return journeys, stations, trains


def _split_from_args(args, journeys):
    if args.known_trains:
        known = [t.strip() for t in args.known_trains.split(",") if t.strip()]
        return dm.segregate(journeys, known_trains=known, cv_cutoff_date=args.cutoff,
                            holdout_ratio=args.holdout, seed=args.seed)
    return dm.segregate(journeys, min_journey_count=args.min_journeys, cv_cutoff_date=args.cutoff,
                        holdout_ratio=args.holdout, seed=args.seed)


def _split_from_params(params: dict, journeys):
    return dm.segregate(journeys, known_trains=params["known_trains"],
                        cv_cutoff_date=params["cv_cutoff_date"],
                        holdout_ratio=params["holdout_ratio"], seed=params["seed"])


def _train_params(args) -> TrainParams:
    forest = ForestParams(n_trees=args.trees, max_depth=args.max_depth,
                          min_samples_leaf=args.min_samples_leaf, seed=args.seed)
    return TrainParams(forest, args.ridge_lambda)


def _write_csv(path: Path, rows) -> None:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    path.write_text(buf.getvalue())


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = SimConfig(n_stations=args.stations_count, n_trains=args.trains_count,
                    n_unknown_trains=args.unknown_trains, order=args.order, sigma=args.sigma,
                    seed=args.seed)
    net, journeys = simulate(cfg)
    written = write_dataset(args.out, net, journeys, cfg)
    print(f"wrote {len(journeys)} journeys of {len(net.routes)} trains "
          f"over {len(net.stations)} stations:")
    for p in written:
        print(f"  {p}")
    return 0


def cmd_train(args) -> int:
    journeys, stations, trains = _load_dataset(args)
    split = _split_from_args(args, journeys)
    registry = train_models(split, stations, trains, FeatureProfile(args.profile),
                            _train_params(args))
    save_registry(registry, args.out, stations, trains)
    print(f"known trains: {len(split.known_trains)}, training journeys: {len(split.train)}, "
          f"cv: {len(split.cv)}, known test: {len(split.known_test)}, "
          f"unknown test: {len(split.unknown_test)}")
    for order in range(1, MAX_ORDER + 1):
        print(f"{order}ps_list size {len(registry.ips_lists.get(order, ()))}")
    print(f"manifest sha256 {manifest_hash(args.out)}")
    return 0


def _read_route(path: Path, train: str, date: dt.date) -> Route:
    rows = list(csv.DictReader(io.StringIO(_read(path, "route file").decode("utf-8"))))
    if not rows or not {"position", "station_code", "dfs_km"} <= set(rows[0]):
        raise UsageError("route file needs columns position,station_code,dfs_km")
    rows.sort(key=lambda r: int(r["position"]))
    actual = None
    if "actual" in rows[0] and all(r["actual"] != "" for r in rows):
        actual = tuple(float(r["actual"]) for r in rows)
    return Route(train, path.stem, date, tuple(r["station_code"] for r in rows),
                 tuple(float(r["dfs_km"]) for r in rows), actual)


def cmd_predict(args) -> int:
    for name in ("route", "date", "train", "archive"):
        if not getattr(args, name):
            raise UsageError(f"predict needs --{name}")
    archive = Path(args.archive)
    if not (archive / "manifest.json").is_file():
        raise UsageError(f"no model archive at {archive}")
    registry = load_registry(archive)
    if args.order > registry.max_order:
        raise UsageError(f"--order {args.order} exceeds the highest trained order "
                         f"{registry.max_order}")
    stations = dm.parse_station_features(_read(Path(args.stations or archive / "stations.csv"),
                                               "stations file"))
    trains_path = Path(args.trains or archive / "trains.csv")
    trains = dm.parse_train_metadata(trains_path.read_bytes()) if trains_path.is_file() else {}
    route = _read_route(Path(args.route), args.train, dm.parse_date(args.date))
    cfg = PredictConfig(N=args.order, model_kind=args.model, knn=KnnConfig(args.k))
    bad = unpredictable_positions(route, registry, cfg, stations)
    if bad:
        print("unpredictable positions: " + ", ".join(f"{i} ({route.stations[i]})" for i in bad),
              file=sys.stderr)
        return 1
    report = predict_journey(route, registry, cfg, stations, trains)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [["position", "station_code", "order_used", "model_station", "predicted", "actual"]]
    for s in report.stations:
        rows.append([s.position, s.station_code, s.order_used, s.model_station,
                     f"{s.predicted:.4f}", "" if s.actual is None else f"{s.actual:g}"])
    _write_csv(out / "report.csv", rows)
    summary = {
        "train_number": report.train_number, "journey_id": report.journey_id,
        "date": report.date.isoformat(), "N": cfg.N, "model": cfg.model_kind,
        "profile": registry.profile.value,
        "lms": [round(x, 6) for x in report.lms],
        "rmse": None if report.rmse is None else round(report.rmse, 6),
        "fallbacks": [{"position": s.position, "station": s.station_code, "order": s.order_used,
                       "model_station": s.model_station, "geo_km": round(s.geo_km, 3),
                       "profile_dist": round(s.profile_dist, 6)} for s in report.fallbacks],
    }
    _dump_json(out / "summary.json", summary)
    plotting.prediction_vs_actual(route.stations, report.lms, report.actuals,
                                  f"Train {route.train_number} on {route.date}",
                                  out / "prediction.png")
    for f in summary["fallbacks"]:
        print(f"fallback at position {f['position']}: {f['station']} uses order-{f['order']} "
              f"model of {f['model_station']}")
    print(f"wrote {out / 'report.csv'} and {out / 'summary.json'}")
    return 0


def cmd_evaluate(args) -> int:
    journeys, stations, trains = _load_dataset(args)
    exp_ids = [1, 2, 3, 4] if args.exp == "all" else [int(args.exp)]
    registries = {}
    if args.archive:
        if not (Path(args.archive) / "manifest.json").is_file():
            raise UsageError(f"no model archive at {args.archive}")
        reg = load_registry(args.archive)
        registries[reg.profile] = reg
        split = _split_from_params(reg.split_params, journeys)
        params = ev.ExperimentParams(train=reg.params, knn=KnnConfig(args.k),
                                     ci_mode=args.ci_mode, n_obs_mode=args.n_obs)
    else:
        split = _split_from_args(args, journeys)
        params = ev.ExperimentParams(train=_train_params(args), knn=KnnConfig(args.k),
                                     ci_mode=args.ci_mode, n_obs_mode=args.n_obs)
    if args.model != "both":
        params = dataclasses.replace(params, kinds=(args.model,))
    data = ev.ExperimentData(journeys, split, stations, trains)

    results = []
    for exp_id in exp_ids:
        profile = ev.EXPERIMENTS[exp_id][0]
        if profile not in registries:
            registries[profile] = train_models(split, stations, trains, profile, params.train)
        res = ev.run_experiment(exp_id, data, params, registries[profile])
        if not res.zero_shot_ok:
            print(f"Exp{exp_id}: registry saw unknown-train journeys", file=sys.stderr)
            return 1
        results.append(res)

    out = Path(args.out)
    (out / "figures").mkdir(parents=True, exist_ok=True)
    (out / "coverage_table.csv").write_text(ev.coverage_table(results))
    (out / "rmse_table.csv").write_text(ev.rmse_table(results, N=args.table_order))
    kind = params.kinds[0]
    (out / "order_table.csv").write_text(ev.order_table(results, kind))
    (out / "latemins_long.csv").write_text(ev.latemins_long(journeys))

    summary = {}
    for res in results:
        runs = {}
        for (k, N), run in sorted(res.runs.items()):
            runs[f"{k}/{N}"] = {
                "coverage": {str(lv): round(v, 6) for lv, v in run.coverage.mean.items()},
                "mean_rmse": round(run.batch.mean_rmse, 6),
                "journeys": len(run.batch.reports), "errors": len(run.batch.errors),
            }
        summary[f"Exp{res.exp_id}"] = {
            "profile": res.profile.value, "eval_set": res.eval_set, "zero_shot_ok": res.zero_shot_ok,
            "runs": runs,
            "order_counts": {f"{k}/{c}": {str(n): v for n, v in sel.counts.items()}
                             for (k, c), sel in sorted(res.selections.items())},
        }
    _dump_json(out / "summary.json", summary)

    plotting.coverage_by_order(
        {f"Exp{r.exp_id} {kind}": {N: r.runs[(kind, N)].coverage.mean for (k, N) in r.runs
                                   if k == kind} for r in results},
        out / "figures" / "coverage_by_order.png")
    plotting.order_counts({f"Exp{r.exp_id} BIC": r.selections[(kind, "bic")].counts
                           for r in results}, out / "figures" / "bic_order_counts.png")
    busiest = max(sorted(stations), key=lambda c: stations[c].traffic)
    first_train = next((j.train_number for j in sorted(journeys, key=lambda j: j.train_number)
                        if busiest in j.stations), None)
    if first_train is not None:
        plotting.monthly_latemins(journeys, first_train, busiest,
                                  out / "figures" / f"monthly_{first_train}_{busiest}.png")
        plotting.journey_profile(journeys, first_train, None,
                                 out / "figures" / f"profile_{first_train}.png")

    for res in results:
        for (k, N), run in sorted(res.runs.items()):
            c = run.coverage.mean
            print(f"Exp{res.exp_id} {k:6s} {N}-OMLMPF  CI68 {c[68]:6.2f}  CI95 {c[95]:6.2f}  "
                  f"CI99 {c[99]:6.2f}  mean RMSE {run.batch.mean_rmse:7.2f}")
        for (k, crit), sel in sorted(res.selections.items()):
            print(f"Exp{res.exp_id} {k:6s} {crit.upper()} winners {sel.counts}")
    print(f"wrote tables and figures to {out}")
    return 0


# -- parser -----------------------------------------------------------------

def _order(lo, hi):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid int {text!r}") from None
        if not lo <= v <= hi:
            raise argparse.ArgumentTypeError(f"must be in {lo}..{hi}")
        return v
    return parse


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_data(p):
    p.add_argument("--data", help="directory holding journeys.csv, stations.csv, trains.csv")
    p.add_argument("--journeys")
    p.add_argument("--stations")
    p.add_argument("--trains")


def _add_split(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--known-trains", help="comma-separated known train numbers")
    g.add_argument("--min-journeys", type=int, default=10,
                   help="trains with at least this many journeys are known (default 10)")
    p.add_argument("--cutoff", default="2017-06-30", help="last date of the train/cv period")
    p.add_argument("--holdout", type=float, default=0.2, help="cv share of pre-cutoff journeys")


def _add_training(p):
    p.add_argument("--profile", choices=[x.value for x in FeatureProfile], default="numeric")
    p.add_argument("--trees", type=_positive, default=100)
    p.add_argument("--max-depth", type=_positive, default=None)
    p.add_argument("--min-samples-leaf", type=_positive, default=1)
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON settings file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="railmarkov",
                                     description="Zero-shot train delay prediction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--order", type=_order(1, 3), default=1, help="ground-truth Markov order")
    p.add_argument("--trains", dest="trains_count", type=_positive, default=20)
    p.add_argument("--unknown-trains", type=int, default=8)
    p.add_argument("--stations", dest="stations_count", type=_positive, default=60)
    p.add_argument("--sigma", type=float, default=2.0)
    p.set_defaults(func=cmd_simulate, out="sim")

    p = sub.add_parser("train", parents=[common], help="train per-station models")
    _add_data(p)
    _add_split(p)
    _add_training(p)
    p.set_defaults(func=cmd_train, out="model")

    p = sub.add_parser("predict", parents=[common], help="predict late minutes along a route")
    p.add_argument("--route", help="CSV with position,station_code,dfs_km[,actual]")
    p.add_argument("--date")
    p.add_argument("--train")
    p.add_argument("--archive")
    p.add_argument("--order", type=_order(1, MAX_ORDER), default=3, help="cap N")
    p.add_argument("--model", choices=["forest", "ridge"], default="forest")
    p.add_argument("--k", type=_positive, default=10)
    p.add_argument("--stations", help="override the archive's stations.csv")
    p.add_argument("--trains", help="override the archive's trains.csv")
    p.set_defaults(func=cmd_predict, out="prediction")

    p = sub.add_parser("evaluate", parents=[common], help="run experiments and write tables")
    p.add_argument("--exp", choices=["1", "2", "3", "4", "all"], default="all")
    _add_data(p)
    _add_split(p)
    _add_training(p)
    p.add_argument("--archive", help="reuse a trained archive (and its split)")
    p.add_argument("--model", choices=["forest", "ridge", "both"], default="both")
    p.add_argument("--k", type=_positive, default=10)
    p.add_argument("--ci-mode", choices=["spread", "stderr"], default="spread")
    p.add_argument("--n-obs", choices=["predictions", "training"], default="predictions")
    p.add_argument("--table-order", type=_order(1, MAX_ORDER), default=4,
                   help="N of the run reported in rmse_table.csv")
    p.set_defaults(func=cmd_evaluate, out="evaluation")
    return parser


def _setup_logging():
    level = os.environ.get("RAILMARKOV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    try:
        config = _load_config(known.config)
    except (UsageError, ValueError) as exc:
        print(f"railmarkov: error: {exc}", file=sys.stderr)
        return 2
    if config and command:
        defaults = {k: v for k, v in config.items() if not isinstance(v, dict)}
        defaults.update(config.get(command, {}))
        defaults = {k.replace("-", "_"): v for k, v in defaults.items()}
        parser._subparsers._group_actions[0].choices[command].set_defaults(**defaults)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"railmarkov: error: {exc}", file=sys.stderr)
        return 2
    except (dm.DataError, PredictionError, ValueError, OSError) as exc:
        print(f"railmarkov: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
