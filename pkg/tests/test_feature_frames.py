import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from railmarkov import feature_frames as ff
from railmarkov import oracles
from railmarkov.data_model import Journey, JourneyRecord, TrainMetadata


def make_journey(codes, train="T", date=dt.date(2016, 9, 19), late=None, dfs=None):
    late = late or list(range(len(codes)))
    dfs = dfs or [10.0 * i for i in range(len(codes))]
    stops = tuple(JourneyRecord(train, "j", date, c, lm, d) for c, lm, d in zip(codes, late, dfs))
    return Journey(train, "j", stops)


def test_fig3_route_previous_stations():
    route = ["RNC", "BKSC", "KQR", "GAYA", "DOS", "MGS", "CNB", "NDLS"]
    rows = ff.enumerate_contexts(make_journey(route), 4)
    (mgs,) = [r for r in rows if r.stn0_code == "MGS"]
    assert mgs.stn_codes == ("DOS", "GAYA", "KQR", "BKSC")
    assert len(rows) == 4


def test_kt3_first_order_rows(worked):
    journeys = worked[0]
    kt3 = next(j for j in journeys if j.train_number == "KT3")
    rows = ff.enumerate_contexts(kt3, 1)
    by_target = {r.stn0_code: r for r in rows}
    assert by_target["KS_a"].stn_codes == ("KS_m",)
    assert "KS_m" not in by_target


def test_two_stops_order_three_is_empty():
    assert ff.enumerate_contexts(make_journey(["A", "B"]), 3) == []


def test_order_out_of_range():
    with pytest.raises(ValueError):
        ff.enumerate_contexts(make_journey(["A", "B"]), 6)
    with pytest.raises(ValueError):
        ff.enumerate_contexts(make_journey(["A", "B"]), 0)


def test_db_is_consecutive_distance():
    j = make_journey(["A", "B", "C", "D"], dfs=[0.0, 12.5, 30.0, 31.0])
    (row,) = ff.enumerate_contexts(j, 3)
    assert row.db == (1.0, 17.5, 12.5)
    assert row.dfs == (30.0, 12.5, 0.0)
    assert row.stn0_dfs == 31.0


def _fed_by(frames, station, n):
    return {r.train_number for r in frames[(station, n)].rows}


def test_worked_example_frames(worked):
    _, stations, trains, split = worked
    frames = ff.build_station_frames(split, stations, trains)
    assert _fed_by(frames, "KS_b", 1) == {"KT1", "KT2", "KT3", "KT4"}
    assert _fed_by(frames, "KS_b", 2) == {"KT3"}
    assert ("KS_b", 3) not in frames
    assert _fed_by(frames, "KS_c", 1) == {"KT1", "KT3", "KT5"}
    assert _fed_by(frames, "KS_c", 2) == {"KT1", "KT3"}
    assert _fed_by(frames, "KS_c", 3) == {"KT3"}
    assert ("KS_c", 4) not in frames
    all_trains = {r.train_number for f in frames.values() for r in f.rows}
    assert not all_trains & {"UT1", "UT2"}
    assert list(frames) == sorted(frames)
    for (code, n), frame in frames.items():
        assert all(r.stn0_code == code and r.order == n for r in frame.rows)


def test_ips_lists_match_naive_walk(worked):
    _, stations, trains, split = worked
    frames = ff.build_station_frames(split, stations, trains)
    routes = [j.stations for j in split.train]
    for n in range(1, 6):
        assert {c for c, m in frames if m == n} == oracles.stations_with_order(routes, n)


def _row(month=1, weekday=0, superfast=False, n=2, codes=None):
    codes = codes or tuple(f"P{i}" for i in range(n))
    return ff.ContextRow(
        train_number="T", journey_id="j", train_type="Express", zone="ER",
        is_superfast=superfast, month=month, weekday=weekday, stn_codes=codes,
        late_mins=(1.0,) * n, db=(2.0,) * n, dfs=(3.0,) * n, tfc=(4.0,) * n, deg=(5.0,) * n,
        stn0_code="X", stn0_dfs=6.0, stn0_tfc=7.0, stn0_deg=8.0, target=9.0)


def test_encoded_length_example():
    vocab = ff.CategoryVocab({
        "month": {str(m): m - 1 for m in range(1, 13)},
        "weekday": {str(d): d for d in range(7)},
        "train_type": {"Express": 0, "Other": 1, "Special": 2},
        "zone": {"ER": 0, "NR": 1},
    })
    assert ff.encoded_length("numeric", 2, vocab) == 38
    assert len(ff.encode_row(_row(), "numeric", vocab)) == 38


def test_superfast_and_month_coordinates():
    rows = [_row(month=3), _row(month=4, superfast=True)]
    vocab = ff.build_vocab(rows)
    names = ff.feature_names("numeric", 2, vocab)
    a, b = (ff.encode_row(r, "numeric", vocab) for r in rows)
    assert len(a) == len(b)
    assert a[names.index("is_superfast")] == 0 and b[names.index("is_superfast")] == 1
    assert a[names.index("month=3")] == 1 and b[names.index("month=4")] == 1
    assert a[names.index("month=4")] == 0


def test_unseen_category_gives_zero_block():
    vocab = ff.build_vocab([_row(month=3)])
    names = ff.feature_names("codes", 2, vocab)
    x = ff.encode_row(_row(month=7, codes=("NEW", "P1")), "codes", vocab)
    assert x[names.index("month=3")] == 0
    assert x[names.index("Stn_1_code=P0")] == 0
    assert x[names.index("Stn_2_code=P1")] == 1


def test_vocab_sorted_and_deterministic():
    rows = [_row(codes=("b", "z")), _row(codes=("a", "z"))]
    vocab = ff.build_vocab(rows)
    assert vocab.columns["Stn_1_code"] == {"a": 0, "b": 1}
    assert ff.build_vocab(rows) == vocab


def test_vocab_round_trip(small_sim):
    net, _, split = small_sim
    frames = ff.build_station_frames(split, net.stations, net.trains, n_max=2)
    for frame in list(frames.values())[:10]:
        loaded = ff.CategoryVocab.from_json(frame.vocab.to_json())
        for profile in ff.FeatureProfile:
            np.testing.assert_array_equal(
                frame.matrix(profile),
                np.vstack([ff.encode_row(r, profile, loaded) for r in frame.rows]))


def test_profile_exclusivity():
    vocab = ff.build_vocab([_row(n=3)])
    codes = ff.feature_names("codes", 3, vocab)
    numeric = ff.feature_names("numeric", 3, vocab)
    assert any(c.startswith("Stn_1_code=") for c in codes)
    assert not any(c.startswith(("tfc_of_Stn_", "deg_of_Stn_")) or c.endswith("_dfs") and c != "Stn_0_dfs"
                   for c in codes)
    assert not any("_code=" in c for c in numeric)
    assert {"tfc_of_Stn_3", "deg_of_Stn_3", "Stn_3_dfs"} <= set(numeric)


def test_frame_csv_columns(worked):
    _, stations, trains, split = worked
    frames = ff.build_station_frames(split, stations, trains)
    text = frames[("KS_c", 2)].to_csv()
    header, first = text.splitlines()[:2]
    assert header.split(",") == ff.table_columns(2)
    assert len(first.split(",")) == len(ff.table_columns(2))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 15), st.integers(1, 5))
def test_context_count_matches_walk(n_stops, n):
    j = make_journey([f"S{i}" for i in range(n_stops)])
    rows = ff.enumerate_contexts(j, n)
    assert len(rows) == oracles.context_count(n_stops, n)
    assert all(r.db and min(r.db) >= 0 for r in rows)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=10), st.sampled_from(list(ff.FeatureProfile)))
def test_encoded_length_constant_within_frame(months, profile):
    rows = [_row(month=m) for m in months]
    vocab = ff.build_vocab(rows)
    lengths = {len(ff.encode_row(r, profile, vocab)) for r in rows}
    assert lengths == {ff.encoded_length(profile, 2, vocab)}
