import sys
from pathlib import Path

import pytest

from railmarkov import data_model as dm
from railmarkov import railsim
from railmarkov.omlmpf import TrainParams, train_models
from railmarkov.regressors import ForestParams

DATA = Path(__file__).parent / "data"
WORKED = DATA / "worked_example"
KNOWN_KT = ["KT1", "KT2", "KT3", "KT4", "KT5"]


@pytest.fixture(scope="session")
def worked():
    journeys = dm.parse_journeys((WORKED / "journeys.csv").read_bytes())
    stations = dm.parse_station_features((WORKED / "stations.csv").read_bytes())
    trains = dm.parse_train_metadata((WORKED / "trains.csv").read_bytes())
    split = dm.segregate(journeys, known_trains=KNOWN_KT)
    return journeys, stations, trains, split


@pytest.fixture(scope="session")
def worked_registry(worked):
    _, stations, trains, split = worked
    return train_models(split, stations, trains, "numeric",
                        TrainParams(ForestParams(n_trees=5, seed=1)))


SMALL_SIM = railsim.SimConfig(n_stations=25, n_trains=6, n_unknown_trains=3, n_fresh_stations=8,
                              route_length=(5, 8), journeys_per_train=(12, 18), seed=11)


@pytest.fixture(scope="session")
def small_sim():
    net, journeys = railsim.simulate(SMALL_SIM)
    split = dm.segregate(journeys, known_trains=net.known_trains, seed=0)
    return net, journeys, split


@pytest.fixture(scope="session")
def small_registry(small_sim):
    net, _, split = small_sim
    return train_models(split, net.stations, net.trains, "numeric",
                        TrainParams(ForestParams(n_trees=8, seed=2)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(verdicts):
        terminalreporter.write_line(verdicts[num])
