"""
Resource-based profit evaluator.

Assigns each simulated state a profit value ``v`` in [0, 1] built from five
sub-scores (safety, legality, mission, efficiency, comfort) combined with
configurable weights. Collisions and occupying a lane past its end force the
total to zero.
"""
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

from .config import DynamicsParams, UtilityWeights
from .dynamics import ManeuverAction
from .safeguards import ensure
from .world import (
    RoadNetwork,
    WorldState,
    in_collision,
    leader_of,
    past_lane_end,
)

SAFE_TIME_GAP_S = 2.0
LANE_CHANGE_COMFORT_PENALTY = 0.5
MIN_REFERENCE_SPEED_FRACTION = 0.6

_DEFAULT_PARAMS = DynamicsParams()


def clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class ProfitBreakdown:
    safety: float
    legality: float
    mission: float
    efficiency: float
    comfort: float
    total: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def scores(self) -> Tuple[float, float, float, float, float]:
        return self.safety, self.legality, self.mission, self.efficiency, self.comfort


def safety_score(world: WorldState) -> float:
    ego = world.ego
    leader = leader_of(ego, world.others)
    if leader is None or ego.speed_mps <= 0:
        return 1.0
    time_gap = (leader.s_m - ego.s_m) / ego.speed_mps
    return clamp01(time_gap / SAFE_TIME_GAP_S)


def _speed_limit(world: WorldState, network: RoadNetwork) -> float:
    return min(network.lane(lane).speed_limit_mps for lane in world.ego.occupied_lanes)


def legality_score(world: WorldState, network: RoadNetwork) -> float:
    limit = _speed_limit(world, network)
    return 1.0 - clamp01((world.ego.speed_mps - limit) / limit)


def efficiency_score(world: WorldState, network: RoadNetwork) -> float:
    return clamp01(world.ego.speed_mps / _speed_limit(world, network))


def _remaining_lane_changes(world: WorldState, network: RoadNetwork) -> Optional[float]:
    ego = world.ego
    target = network.mission.target_lane
    hops = network.lane_hops(ego.lane, target)
    if hops is None:
        return None
    if ego.changing_lane:
        via = network.lane_hops(ego.lane_change_target, target)
        if via is not None and via < hops:
            return via + (1.0 - ego.lateral_progress)
        return hops + ego.lateral_progress
    return float(hops)


def _compliance_deadline(world: WorldState, network: RoadNetwork) -> Optional[float]:
    mission = network.mission
    candidates = []
    if mission.must_be_in_lane_by_m is not None:
        candidates.append(mission.must_be_in_lane_by_m)
    for lane_id in world.ego.occupied_lanes:
        ends = network.lane(lane_id).ends_at_m
        if ends is not None:
            candidates.append(ends)
    return min(candidates) if candidates else None


def mission_score(world: WorldState, network: RoadNetwork, params: DynamicsParams = _DEFAULT_PARAMS) -> float:
    """
    1 while the ego is on route; off route it decays linearly once the
    remaining distance to the compliance deadline drops below what the
    remaining lane changes plus one action need, and reaches 0 when the
    lane changes can no longer complete in time.

    Distances are measured at the current speed, floored at
    ``MIN_REFERENCE_SPEED_FRACTION`` of the speed limit; a stopped ego
    near the deadline does not score 1.
    """
    changes = _remaining_lane_changes(world, network)
    if changes is None:
        return 0.0
    if changes <= 0:
        return 1.0
    deadline = _compliance_deadline(world, network)
    if deadline is None:
        return 1.0
    speed = max(world.ego.speed_mps, MIN_REFERENCE_SPEED_FRACTION * _speed_limit(world, network))
    remaining = deadline - world.ego.s_m
    inevitable = speed * changes * params.lane_change_duration_s
    needed = inevitable + speed * params.action_duration_s
    if remaining <= inevitable or remaining < 0:
        return 0.0
    if remaining >= needed:
        return 1.0
    return clamp01((remaining - inevitable) / (needed - inevitable))


def comfort_score(world: WorldState, action_taken: Optional[ManeuverAction],
                  params: DynamicsParams = _DEFAULT_PARAMS) -> float:
    penalty = abs(world.ego.accel_mps2) / params.stop_decel_mps2
    if action_taken is not None and action_taken.is_lane_change:
        penalty += LANE_CHANGE_COMFORT_PENALTY
    return clamp01(1.0 - penalty)


@ensure(lambda b: all(0.0 <= x <= 1.0 for x in b.as_dict().values()), "profit sub-scores must lie in [0, 1]")
def evaluate_profit(
    world: WorldState,
    network: RoadNetwork,
    action_taken: Optional[ManeuverAction],
    weights: UtilityWeights,
    params: DynamicsParams = _DEFAULT_PARAMS,
) -> ProfitBreakdown:
    """
    Profit of being in ``world`` after ``action_taken``.

    Args:
        world: Simulated state to evaluate
        network: Road network with the mission
        action_taken: Action that led to the state (None for the current state)
        weights: Aggregation weights of the sub-scores
        params: Dynamics parameters (comfort normalization, lane change timing)

    Returns:
        ProfitBreakdown whose ``total`` is the weighted sum, or 0 on a
        collision or when the ego occupies a lane past its end
    """
    safety = safety_score(world)
    legality = legality_score(world, network)
    mission = mission_score(world, network, params)
    efficiency = efficiency_score(world, network)
    comfort = comfort_score(world, action_taken, params)
    if in_collision(world) or past_lane_end(world.ego, network):
        total = 0.0
    else:
        total = clamp01(math.fsum(
            w * x for w, x in zip(weights.as_tuple(), (safety, legality, mission, efficiency, comfort))
        ))
    return ProfitBreakdown(safety, legality, mission, efficiency, comfort, total)

