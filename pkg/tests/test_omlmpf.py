import datetime as dt
import math

import numpy as np
import pytest

from railmarkov import data_model as dm
from railmarkov import oracles
from railmarkov.feature_frames import encode_row, make_row, StationLookup
from railmarkov.omlmpf import (PredictConfig, PredictionError, PredictionReport, Route,
                               StationPrediction, TrainParams, load_registry, manifest_hash,
                               predict_and_score, predict_journey, save_registry, train_models)
from railmarkov.regressors import ForestParams

EXPECTED_1PS = {"KS_b", "KS_c", "KS_d", "KS_e", "KS_f", "KS_h", "KS_i", "KS_j", "KS_a", "KS_k",
             "KS_l", "KS_n", "KS_o", "KS_q"}
EXPECTED_4PS = {"KS_e", "KS_f", "KS_j", "KS_k", "KS_l", "KS_n", "KS_o", "KS_q"}


def test_worked_example_ips_lists(worked_registry):
    assert worked_registry.ips_lists[1] == EXPECTED_1PS
    assert worked_registry.ips_lists[4] == EXPECTED_4PS
    assert "KS_m" not in worked_registry.ips_lists[3]
    for (code, order) in worked_registry.models:
        assert code in worked_registry.ips_lists[order]
    assert all(not c.startswith("US_") for s in worked_registry.ips_lists.values() for c in s)


def test_two_stop_train_gives_only_first_order():
    stops = tuple(dm.JourneyRecord("K", "k", dt.date(2016, 1, 1), c, lm, d)
                  for c, lm, d in (("A", 0, 0.0), ("B", 5, 10.0)))
    split = dm.segregate([dm.Journey("K", "k", stops)], known_trains=["K"], holdout_ratio=0.0)
    reg = train_models(split, {}, {}, "numeric", TrainParams(ForestParams(n_trees=2)))
    assert list(reg.models) == [("B", 1)]
    assert reg.max_order == 1


def test_no_frames_is_error():
    split = dm.DataSplit((), (), (), (), (), frozenset(), frozenset(), {})
    with pytest.raises(ValueError, match="no non-empty"):
        train_models(split, {}, {}, "numeric")


def ut2(worked):
    return next(j for j in worked[0] if j.train_number == "UT2")


def test_ut2_walkthrough(worked, worked_registry):
    _, stations, trains, _ = worked
    report = predict_journey(Route.from_journey(ut2(worked)), worked_registry, PredictConfig(N=3),
                             stations, trains)
    assert [s.position for s in report.fallbacks] == [1, 3, 4]
    us_v = report.stations[1]
    assert us_v.station_code == "US_v" and us_v.model_station in EXPECTED_1PS
    # the fallback model sees a 1-prev row whose Stn_1 is the source at 0 late minutes
    model = worked_registry.models[(us_v.model_station, 1)]
    j = ut2(worked)
    row = make_row(train=trains["UT2"], journey_id=j.journey_id, date=j.date, codes=j.stations,
                   dfs=j.distances, late=[0.0], pos=1, n=1, lookup=StationLookup(stations))
    assert row.stn_codes == ("US_u",) and row.late_mins == (0.0,)
    assert model.predict(encode_row(row, "numeric", model.vocab), "forest") == us_v.predicted
    ks_m = report.stations[3]
    assert ks_m.station_code == "KS_m" and ks_m.fallback
    assert ks_m.model_station in worked_registry.ips_lists[3]


def test_report_invariants(small_sim, small_registry):
    net, _, split = small_sim
    for N in range(1, small_registry.max_order + 1):
        for kind in ("forest", "ridge"):
            batch = predict_and_score(split.cv + split.unknown_test, small_registry,
                                      PredictConfig(N=N, model_kind=kind), net.stations, net.trains)
            assert not batch.errors
            for r in batch.reports:
                assert r.lms[0] == 0
                for s in r.stations[1:]:
                    assert s.order_used == min(s.position, N)
                    assert s.model_station in small_registry.ips_lists[s.order_used]
                    assert s.fallback == (s.model_station != s.station_code)


def test_known_full_order_route_has_no_fallback(worked, worked_registry):
    _, stations, trains, _ = worked
    kt1 = next(j for j in worked[0] if j.train_number == "KT1")
    report = predict_journey(Route.from_journey(kt1), worked_registry, PredictConfig(N=3),
                             stations, trains)
    assert report.fallbacks == []


def test_prediction_is_deterministic(small_sim, small_registry):
    net, _, split = small_sim
    cfg = PredictConfig(N=2)
    a = predict_and_score(split.unknown_test, small_registry, cfg, net.stations, net.trains)
    b = predict_and_score(split.unknown_test, small_registry, cfg, net.stations, net.trains)
    assert [r.lms for r in a.reports] == [r.lms for r in b.reports]


def _report(pred, act):
    return PredictionReport("T", "j", dt.date(2016, 1, 1),
                            [StationPrediction(i, f"S{i}", min(i, 1), "", p, a)
                             for i, (p, a) in enumerate(zip(pred, act))])


def test_rmse_examples():
    assert _report([0, 5, 7], [0, 5, 7]).rmse == 0
    assert _report([3, 8, 10, 1], [0, 5, 7, -2]).rmse == pytest.approx(3)
    assert _report([0, 1], [None, 1]).rmse is None


def test_batch_rmse_matches_oracle(small_sim, small_registry):
    net, _, split = small_sim
    batch = predict_and_score(split.cv, small_registry, PredictConfig(N=2), net.stations, net.trains)
    expected = [oracles.rmse(r.lms, [float(x) for x in j.latemins])
                for r, j in zip(batch.reports, split.cv)]
    assert [r.rmse for r in batch.reports] == pytest.approx(expected, rel=1e-12)
    assert batch.mean_rmse == pytest.approx(sum(expected) / len(expected), rel=1e-12)


def test_errors(worked, worked_registry):
    _, stations, trains, _ = worked
    j = ut2(worked)
    route = Route.from_journey(j)
    low = train_models(worked[3], stations, trains, "numeric",
                       TrainParams(ForestParams(n_trees=2), n_max=2))
    with pytest.raises(ValueError, match="exceeds"):
        predict_journey(route, low, PredictConfig(N=3), stations, trains)
    with pytest.raises(PredictionError):
        predict_journey(Route("UT2", "x", j.date, ("US_u",), (0.0,)), worked_registry,
                        PredictConfig(N=1), stations, trains)
    bare = {k: v for k, v in stations.items() if k != "US_w"}
    with pytest.raises(PredictionError) as exc:
        predict_journey(route, worked_registry, PredictConfig(N=3), bare, trains)
    assert exc.value.positions == [4]
    with pytest.raises(ValueError):
        PredictConfig(N=0)
    with pytest.raises(ValueError):
        PredictConfig(model_kind="svm")


def test_batch_collects_errors_without_aborting(worked, worked_registry):
    _, stations, trains, _ = worked
    bare = {k: v for k, v in stations.items() if k != "US_w"}
    journeys = [j for j in worked[0] if j.train_number in ("UT1", "UT2")]
    batch = predict_and_score(journeys, worked_registry, PredictConfig(N=3), bare, trains)
    assert len(batch.reports) == 2 and len(batch.errors) == 2


def test_archive_round_trip(tmp_path, worked, worked_registry):
    _, stations, trains, _ = worked
    save_registry(worked_registry, tmp_path / "a", stations, trains)
    save_registry(worked_registry, tmp_path / "b", stations, trains)
    assert manifest_hash(tmp_path / "a") == manifest_hash(tmp_path / "b")
    loaded = load_registry(tmp_path / "a")
    assert loaded.ips_lists == worked_registry.ips_lists
    assert loaded.profile == worked_registry.profile
    route = Route.from_journey(ut2(worked))
    for kind in ("forest", "ridge"):
        cfg = PredictConfig(N=3, model_kind=kind)
        a = predict_journey(route, worked_registry, cfg, stations, trains).lms
        b = predict_journey(route, loaded, cfg, stations, trains).lms
        assert a == b and all(math.isfinite(x) for x in a)
