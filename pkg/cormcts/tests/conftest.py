"""Shared fixtures for the cormcts tests."""
import pytest
from prometheus_client import CollectorRegistry

from cormcts import (
    DynamicsParams,
    Lane,
    MissionGoal,
    MissionKind,
    RoadNetwork,
    UtilityWeights,
    VehicleState,
    WorldState,
)
from cormcts.metrics import MetricsCollector
from cormcts.world import KMH_TO_MPS

LIMIT = 50.0 * KMH_TO_MPS
SLOW = 20.0 * KMH_TO_MPS


def two_lanes(ends_at_m=None, must_be_in_lane_by_m=None, target_lane=0):
    """Right lane 0 and left lane 1, 300 m long, 50 km/h."""
    return RoadNetwork(
        lanes=(
            Lane(id=0, length_m=300.0, speed_limit_mps=LIMIT, left_neighbor=1),
            Lane(id=1, length_m=300.0, speed_limit_mps=LIMIT, right_neighbor=0, ends_at_m=ends_at_m),
        ),
        mission=MissionGoal(MissionKind.REACH_END, target_lane, must_be_in_lane_by_m),
    )


def exit_ramp():
    """Two main lanes plus exit lane 2 on the right, open between 200 and 260 m."""
    return RoadNetwork(
        lanes=(
            Lane(id=0, length_m=300.0, speed_limit_mps=LIMIT, left_neighbor=1, right_neighbor=2),
            Lane(id=1, length_m=300.0, speed_limit_mps=LIMIT, right_neighbor=0),
            Lane(id=2, length_m=260.0, speed_limit_mps=LIMIT, left_neighbor=0,
                 exit_window_m=(200.0, 260.0), is_exit=True),
        ),
        mission=MissionGoal(MissionKind.TAKE_EXIT, 2, 260.0),
    )


def world(lane=0, s_m=0.0, speed_mps=SLOW, others=(), **ego_fields):
    return WorldState(
        ego=VehicleState(id=0, lane=lane, s_m=s_m, speed_mps=speed_mps, **ego_fields),
        others=tuple(others),
    )


def other(vehicle_id=1, lane=0, s_m=9.0, speed_mps=SLOW):
    return VehicleState(id=vehicle_id, lane=lane, s_m=s_m, speed_mps=speed_mps)


@pytest.fixture
def params():
    return DynamicsParams()


@pytest.fixture
def weights():
    return UtilityWeights()


@pytest.fixture
def metrics():
    return MetricsCollector(namespace="test", registry=CollectorRegistry())
