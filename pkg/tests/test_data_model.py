import datetime as dt

import pytest
from hypothesis import given, settings, strategies as st

from railmarkov import data_model as dm
from railmarkov import oracles

HEADER = "train_number,journey_id,actarr_date,station_code,latemin,distance_km\n"


def test_one_row_derives_month_and_weekday():
    (j,) = dm.parse_journeys(HEADER + "12439,j1,2016-09-19,MGS,107,0\n")
    stop = j.stops[0]
    assert stop.month == 9
    assert stop.weekday == 0  # Monday
    assert stop.latemin == 107


def test_row_values_parse_losslessly():
    text = HEADER + "22811,j1,2016-09-19,BBS,0,0\n22811,j1,2016-09-19,MGS,107,204\n"
    (j,) = dm.parse_journeys(text.encode())
    assert j.latemins == (0, 107)
    assert j.distances == (0.0, 204.0)
    assert dm.parse_journeys(dm.write_journeys([j])) == [j]


def test_empty_body_gives_empty_list():
    assert dm.parse_journeys(HEADER) == []
    assert dm.parse_journeys("") == []


def test_malformed_date_reports_line():
    with pytest.raises(dm.DataError, match="line 3"):
        dm.parse_journeys(HEADER + "1,a,2016-09-19,X,0,0\n1,a,19 Sep 2016,Y,1,5\n")


def test_negative_distance_rejected():
    with pytest.raises(dm.DataError, match="line 2"):
        dm.parse_journeys(HEADER + "1,a,2016-09-19,X,0,-4\n")


def test_wrong_header_rejected():
    with pytest.raises(dm.DataError, match="header"):
        dm.parse_journeys("train,journey\n1,a\n")


def test_grouping_keeps_row_order():
    text = HEADER + ("1,a,2016-01-01,X,0,0\n2,b,2016-01-02,P,0,0\n"
                     "1,a,2016-01-01,Y,3,10\n2,b,2016-01-02,Q,-2,7\n")
    js = dm.parse_journeys(text)
    assert [j.stations for j in js] == [("X", "Y"), ("P", "Q")]
    assert js[1].latemins == (0, -2)


SHEAD = "station_code,latitude,longitude,traffic,degree\n"


def test_station_features():
    m = dm.parse_station_features(SHEAD + "MGS,25.28,83.12,120,6\n")
    assert len(m) == 1 and m["MGS"].traffic == 120


def test_station_duplicate_names_station():
    with pytest.raises(dm.DataError, match="MGS"):
        dm.parse_station_features(SHEAD + "MGS,25,83,1,1\nMGS,25,83,1,1\n")


def test_station_latitude_bounds():
    with pytest.raises(dm.DataError, match="latitude"):
        dm.parse_station_features(SHEAD + "X,91,0,1,1\n")


def test_station_missing_coordinates_allowed():
    m = dm.parse_station_features(SHEAD + "X,,,3,2\n")
    assert not m["X"].has_coordinates


def test_many_stations():
    body = "".join(f"S{i},{i % 90},{i % 180},{i},{i % 7}\n" for i in range(819))
    assert len(dm.parse_station_features(SHEAD + body)) == 819


THEAD = "train_number,train_type,zone,is_superfast\n"


def test_train_metadata():
    m = dm.parse_train_metadata(THEAD + "13050,Express,ER,false\n")
    assert m["13050"].train_type == "Express"
    assert m["13050"].is_superfast is False
    assert dm.parse_train_metadata(THEAD) == {}


def test_train_metadata_duplicate():
    with pytest.raises(dm.DataError):
        dm.parse_train_metadata(THEAD + "1,Express,ER,false\n1,Other,ER,true\n")


def test_unknown_train_defaults_with_warning(caplog):
    meta = dm.lookup_train({}, "99999")
    assert (meta.train_type, meta.zone, meta.is_superfast) == ("Other", "UNK", False)
    assert "99999" in caplog.text


def _journey(train, jid, date, n=3):
    stops = tuple(dm.JourneyRecord(train, jid, date, f"S{i}", i, 10.0 * i) for i in range(n))
    return dm.Journey(train, jid, stops)


def test_segregate_threshold_sends_rare_train_to_unknown():
    js = [_journey("A", f"a{i}", dt.date(2016, 5, 1 + i)) for i in range(5)]
    js += [_journey("B", "b0", dt.date(2016, 5, 1))]
    split = dm.segregate(js, min_journey_count=3)
    assert split.known_trains == {"A"}
    assert [j.journey_id for j in split.unknown_test] == ["b0"]
    assert not split.known_trains & split.unknown_trains


def test_segregate_errors():
    js = [_journey("A", "a0", dt.date(2016, 5, 1))]
    with pytest.raises(dm.DataError):
        dm.segregate(js, min_journey_count=5)
    with pytest.raises(dm.DataError):
        dm.segregate(js, known_trains=["A"], cv_cutoff_date="2015-01-01")


def test_segregate_counts_match_oracle(small_sim):
    _, journeys, _ = small_sim
    split = dm.segregate(journeys, min_journey_count=10, seed=3)
    expected = oracles.split_counts([(j.train_number, j.date) for j in journeys], 10,
                                    dt.date(2017, 6, 30))
    assert (len(split.known_train_cv), len(split.known_test), len(split.unknown_test)) == expected
    assert len(split.train) + len(split.cv) == len(split.known_train_cv)
    assert {j.journey_id for j in split.train}.isdisjoint(j.journey_id for j in split.cv)


def test_segregate_deterministic_and_four_to_one(small_sim):
    _, journeys, _ = small_sim
    a = dm.segregate(journeys, min_journey_count=10, seed=5)
    b = dm.segregate(journeys, min_journey_count=10, seed=5)
    assert a == b
    ratio = len(a.cv) / len(a.known_train_cv)
    assert 0.15 <= ratio <= 0.25


def test_round_trip_all_formats(small_sim):
    net, journeys, _ = small_sim
    assert dm.parse_journeys(dm.write_journeys(journeys)) == journeys
    assert dm.parse_station_features(dm.write_station_features(net.stations)) == net.stations
    assert dm.parse_train_metadata(dm.write_train_metadata(net.trains)) == net.trains


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.dates(dt.date(2000, 1, 1), dt.date(2030, 12, 31)),
                          st.integers(-30, 500), st.integers(0, 400)), min_size=1, max_size=20))
def test_round_trip_property(rows):
    dist = 0
    lines = [HEADER.strip()]
    for k, (date, late, leg) in enumerate(rows):
        dist = 0 if k == 0 else dist + leg
        lines.append(f"T1,j,{date.isoformat()},S{k},{late},{dist}")
    text = "\n".join(lines) + "\n"
    (j,) = dm.parse_journeys(text)
    for rec, (date, _, _) in zip(j.stops, rows):
        assert rec.month == date.month and rec.weekday == date.weekday()
    assert dm.write_journeys([j]) == text
