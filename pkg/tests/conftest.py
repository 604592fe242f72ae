"""Shared plants, topologies and schedules."""

import numpy as np
import pytest

from switchcons.netgraph import FollowerTopology, SwitchingSchedule
from switchcons.scenario import bundled_path, load_scenario
from switchcons.synthesis import PlantModel

# Third-order unstable plant with a single input and output.
EXAMPLE_A = np.array(
    [
        [2.0 / 3.0, -25.0 / 6.0, 0.0],
        [4.0 / 3.0, 0.0, 1.0 / 3.0],
        [0.0, -1.0, 1.0 / 6.0],
    ]
)
EXAMPLE_B = np.array([[0.0], [0.0], [1.0]])


def two_follower_schedule():
    leader_only = FollowerTopology.from_edges(2, [], [1])
    edge_only = FollowerTopology.from_edges(2, [(1, 2)], [])
    return SwitchingSchedule(
        [(0, 0.1), (1, 0.1)], [leader_only, edge_only], (0,), T_c=0.2, dwell_floor=0.1
    )


def standin_schedule():
    g1 = FollowerTopology.from_edges(8, [(1, 2), (3, 4), (5, 6), (7, 8)], [1, 3])
    g2 = FollowerTopology.from_edges(8, [(2, 3), (4, 5), (6, 7), (8, 1)], [5])
    return SwitchingSchedule([(0, 0.05), (1, 0.05)], [g1, g2], (0,), T_c=0.1, dwell_floor=0.05)


@pytest.fixture
def example_plant():
    return PlantModel(EXAMPLE_A, EXAMPLE_B, EXAMPLE_B.T)


@pytest.fixture
def two_follower():
    return two_follower_schedule()


@pytest.fixture
def standin():
    return standin_schedule()


@pytest.fixture(params=["certified_scalar", "standin8", "static_connected", "two_follower"])
def bundled(request):
    return load_scenario(bundled_path(request.param))


_ACCEPTANCE = {}
CALL_REPORT = pytest.StashKey()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        item.stash[CALL_REPORT] = report


def pytest_runtest_logreport(report):
    for key, value in report.user_properties:
        if key == "acceptance" and report.when == "call":
            _ACCEPTANCE[value] = report.outcome
        elif key == "acceptance" and report.failed:
            _ACCEPTANCE[value] = "failed"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        verdict = "PASS" if _ACCEPTANCE[label] == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}")
