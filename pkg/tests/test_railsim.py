import dataclasses

import pytest

from railmarkov import data_model as dm
from railmarkov import railsim
from railmarkov.railsim import SimConfig

QUIET = dict(base=0.0, alpha=0.0, beta=0.0, station_sd=0.0, season_amplitude=0.0, sigma=0.0,
             n_stations=20, n_trains=4, n_unknown_trains=2, n_fresh_stations=6,
             route_length=(5, 9), journeys_per_train=(3, 5), weights=(1.0,), seed=3)


def test_fixed_point_at_zero():
    _, journeys = railsim.simulate(SimConfig(**QUIET))
    assert journeys and all(lm == 0 for j in journeys for lm in j.latemins)


def test_congested_station_propagates():
    cfg = SimConfig(**QUIET)
    net = railsim.generate_network(cfg)
    train = net.known_trains[0]
    hot = net.routes[train][2]
    net.bias[hot] = 10.0
    checked = 0
    for j in railsim.generate_journeys(net, cfg):
        if hot not in j.stations[1:]:
            continue    # the source is always on time
        k = j.stations.index(hot)
        checked += 1
        assert all(lm == 0 for lm in j.latemins[:k])
        assert all(lm >= 10 for lm in j.latemins[k:])
    assert checked > 0


def test_higher_order_kernel_unrolls():
    cfg = SimConfig(**{**QUIET, "order": 2, "weights": (0.5, 0.5)})
    net = railsim.generate_network(cfg)
    t = net.known_trains[0]
    net.bias[net.routes[t][1]] = 8.0
    j = next(j for j in railsim.generate_journeys(net, cfg) if j.train_number == t)
    # 0, 8, round(0.5*8 + 0.5*0) = 4, round(0.5*4 + 0.5*8) = 6, ...
    assert j.latemins[:4] == (0, 8, 4, 6)


def test_network_semantics():
    cfg = SimConfig(seed=5)
    net = railsim.generate_network(cfg)
    for code, feat in net.stations.items():
        assert feat.traffic == sum(code in r for r in net.routes.values())
        neighbours = set()
        for r in net.routes.values():
            for a, b in zip(r, r[1:]):
                if a == code:
                    neighbours.add(b)
                if b == code:
                    neighbours.add(a)
        assert feat.degree == len(neighbours)
    for t in net.unknown_trains:
        assert sum(c.startswith("U") for c in net.routes[t]) >= cfg.fresh_per_unknown
    for t in net.known_trains:
        assert not any(c.startswith("U") for c in net.routes[t])
    for dfs in net.dfs.values():
        assert dfs[0] == 0 and all(b > a for a, b in zip(dfs, dfs[1:]))


def test_deterministic_and_floored():
    cfg = SimConfig(seed=9, sigma=25.0)
    a, b = railsim.simulate(cfg), railsim.simulate(cfg)
    assert a[1] == b[1] and a[0].stations == b[0].stations
    assert all(lm >= railsim.DELAY_FLOOR for j in a[1] for lm in j.latemins)
    assert all(j.latemins[0] == 0 for j in a[1])
    assert railsim.simulate(dataclasses.replace(cfg, seed=10))[1] != a[1]


def test_round_trip_files(tmp_path):
    cfg = SimConfig(n_trains=5, n_unknown_trains=2, seed=2)
    net, journeys = railsim.simulate(cfg)
    railsim.write_dataset(tmp_path, net, journeys, cfg)
    assert dm.parse_journeys((tmp_path / "journeys.csv").read_text()) == journeys
    assert dm.parse_station_features((tmp_path / "stations.csv").read_text()) == net.stations
    assert dm.parse_train_metadata((tmp_path / "trains.csv").read_text()) == net.trains
    assert SimConfig.from_json(cfg.to_json()) == cfg


@pytest.mark.parametrize("bad", [dict(order=4), dict(sigma=-1), dict(route_length=(1, 3)),
                                 dict(order=2, weights=(1.0,))])
def test_invalid_configs(bad):
    with pytest.raises(ValueError):
        SimConfig(**bad)


def test_infeasible_route_length():
    with pytest.raises(ValueError, match="route length"):
        railsim.generate_network(SimConfig(n_stations=5, route_length=(3, 8)))


def test_season_peaks_in_december():
    values = {m: railsim.season(m, 6.0) for m in range(1, 13)}
    assert max(values, key=values.get) == 12
    assert values[6] == pytest.approx(-6.0)
