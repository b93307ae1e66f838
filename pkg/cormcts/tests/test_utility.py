"""Tests for the profit evaluator."""
import numpy as np
import pytest

from cormcts import InvariantViolation, ManeuverAction, UtilityWeights, ValidationError, evaluate_profit
from cormcts.utility import comfort_score, mission_score

from .conftest import LIMIT, SLOW, exit_ramp, other, two_lanes, world


def test_following_slow_leader(weights):
    state = world(speed_mps=SLOW, others=[other(s_m=30.0, speed_mps=SLOW)])
    profit = evaluate_profit(state, two_lanes(), ManeuverAction.KEEP_LANE_SAME_SPEED, weights)

    assert profit.safety == 1.0
    assert profit.legality == 1.0
    assert profit.mission == 1.0
    assert profit.efficiency == pytest.approx(0.4)
    assert profit.comfort == 1.0
    assert profit.total == pytest.approx(0.91, abs=1e-9)


def test_alone_at_speed_limit(weights):
    profit = evaluate_profit(world(speed_mps=LIMIT), two_lanes(), ManeuverAction.KEEP_LANE_SAME_SPEED, weights)

    assert profit.total == pytest.approx(1.0)


def test_collision_is_zero(weights):
    state = world(s_m=50.0, speed_mps=LIMIT, others=[other(s_m=52.0)])
    profit = evaluate_profit(state, two_lanes(), ManeuverAction.KEEP_LANE_SAME_SPEED, weights)

    assert profit.total == 0.0
    assert profit.efficiency == 1.0


def test_past_lane_end_is_zero(weights):
    profit = evaluate_profit(world(lane=1, s_m=210.0), two_lanes(ends_at_m=200.0), None, weights)

    assert profit.total == 0.0


def test_close_leader_lowers_safety(weights):
    # 5.556 m at 5.556 m/s is a 1 s gap, half the safe gap
    state = world(s_m=0.0, speed_mps=SLOW, others=[other(s_m=SLOW)])
    profit = evaluate_profit(state, two_lanes(), ManeuverAction.KEEP_LANE_SAME_SPEED, weights)

    assert profit.safety == pytest.approx(0.5)


def test_speeding_is_illegal(weights):
    profit = evaluate_profit(world(speed_mps=1.5 * LIMIT), two_lanes(), None, weights)

    assert profit.legality == pytest.approx(0.5)
    assert profit.efficiency == 1.0


def test_lane_change_costs_comfort(params):
    assert comfort_score(world(), ManeuverAction.CHANGE_LANE_LEFT, params) == pytest.approx(0.5)
    assert comfort_score(world(), ManeuverAction.KEEP_LANE_SAME_SPEED, params) == 1.0
    assert comfort_score(world(accel_mps2=-4.0), ManeuverAction.STOP, params) == 0.0


@pytest.mark.parametrize("s_m, expected", [(150.0, 1.0), (165.0, 0.6), (180.0, 0.0)])
def test_mission_decays_toward_lane_end(params, s_m, expected):
    # 20 km/h is below the 30 km/h reference: one lane change needs 25 m, one more action 16.67 m
    network = two_lanes(ends_at_m=200.0)

    assert mission_score(world(lane=1, s_m=s_m), network, params) == pytest.approx(expected, abs=1e-3)


def test_mission_uses_own_speed_above_reference(params):
    # 50 km/h: one lane change needs 41.67 m, one more action 27.78 m
    network = two_lanes(ends_at_m=200.0)

    assert mission_score(world(lane=1, s_m=150.0, speed_mps=LIMIT), network, params) == pytest.approx(0.3, abs=1e-9)


@pytest.mark.parametrize("speed_mps", [0.0, 1.0, SLOW])
def test_stopped_ego_near_lane_end_loses_mission(params, speed_mps):
    network = two_lanes(ends_at_m=200.0)

    assert mission_score(world(lane=1, s_m=190.0, speed_mps=speed_mps), network, params) == 0.0
    assert mission_score(world(lane=1, s_m=50.0, speed_mps=speed_mps), network, params) == 1.0


def test_mission_counts_lane_change_progress(params):
    network = two_lanes(ends_at_m=200.0)
    returning = world(lane=1, s_m=180.0, lateral_progress=0.9, lane_change_target=0)

    assert mission_score(returning, network, params) > mission_score(world(lane=1, s_m=180.0), network, params)


def test_exit_mission_before_window(params):
    network = exit_ramp()

    assert mission_score(world(lane=0, s_m=100.0), network, params) == 1.0
    assert mission_score(world(lane=0, s_m=255.0), network, params) == 0.0


def test_profit_bounds_fuzz(weights):
    rng = np.random.default_rng(3)
    network = two_lanes(ends_at_m=200.0)
    actions = list(ManeuverAction) + [None]
    for _ in range(10_000):
        state = world(
            lane=int(rng.integers(0, 2)),
            s_m=float(rng.uniform(0, 300)),
            speed_mps=float(rng.uniform(0, 30)),
            accel_mps2=float(rng.uniform(-4, 1.5)),
            others=[other(lane=int(rng.integers(0, 2)), s_m=float(rng.uniform(0, 300)))],
        )
        profit = evaluate_profit(state, network, actions[int(rng.integers(0, len(actions)))], weights)
        assert all(0.0 <= value <= 1.0 for value in profit.as_dict().values())


def test_total_rises_with_efficiency(weights):
    network = two_lanes()
    slow = evaluate_profit(world(speed_mps=5.0), network, None, weights).total
    fast = evaluate_profit(world(speed_mps=10.0), network, None, weights).total

    assert fast > slow


def test_scaled_weights_give_same_total():
    state = world(speed_mps=SLOW, others=[other(s_m=30.0)])
    network = two_lanes()
    default = evaluate_profit(state, network, None, UtilityWeights()).total
    scaled = UtilityWeights.normalized(w_safety=3, w_legality=1.5, w_mission=3, w_efficiency=1.5, w_comfort=1)

    assert evaluate_profit(state, network, None, scaled).total == pytest.approx(default, abs=1e-12)


def test_weights_must_sum_to_one():
    with pytest.raises(ValidationError, match="sum to 1"):
        UtilityWeights(w_safety=0.5)


def test_out_of_range_breakdown_is_caught(mocker, weights):
    mocker.patch("cormcts.utility.efficiency_score", return_value=1.5)

    with pytest.raises(InvariantViolation):
        evaluate_profit(world(), two_lanes(), None, weights)
