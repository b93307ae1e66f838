"""
Forward simulation of ego maneuvers and interacting vehicles.

Longitudinal motion uses constant-acceleration kinematics with speed clamped
at zero. Lateral motion is time-parameterized: ``lateral_progress`` grows by
``dt / lane_change_duration_s`` while a lane change action is held and decays
at the same rate when any other action interrupts it.
"""
import math
from dataclasses import replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .config import DynamicsParams, IDMParams
from .errors import InfeasibleAction
from .world import (
    COLLISION_DISTANCE_M,
    EPS,
    Direction,
    MissionKind,
    MissionStatus,
    OtherVehicleModel,
    RoadNetwork,
    VehicleState,
    WorldState,
    mission_status,
)


class ManeuverAction(Enum):
    CHANGE_LANE_LEFT = "change_lane_left"
    CHANGE_LANE_RIGHT = "change_lane_right"
    KEEP_LANE_ACCELERATE = "keep_lane_accelerate"
    KEEP_LANE_SAME_SPEED = "keep_lane_same_speed"
    KEEP_LANE_DECELERATE = "keep_lane_decelerate"
    STOP = "stop"

    @property
    def is_lane_change(self) -> bool:
        return self in (ManeuverAction.CHANGE_LANE_LEFT, ManeuverAction.CHANGE_LANE_RIGHT)

    @property
    def direction(self) -> Optional[Direction]:
        if self is ManeuverAction.CHANGE_LANE_LEFT:
            return Direction.LEFT
        if self is ManeuverAction.CHANGE_LANE_RIGHT:
            return Direction.RIGHT
        return None


ALL_ACTIONS: Tuple[ManeuverAction, ...] = tuple(ManeuverAction)


def nominal_accel(action: ManeuverAction, params: DynamicsParams) -> float:
    """Signed longitudinal acceleration commanded by an action."""
    return {
        ManeuverAction.KEEP_LANE_ACCELERATE: params.accel_mps2,
        ManeuverAction.KEEP_LANE_DECELERATE: -params.decel_mps2,
        ManeuverAction.STOP: -params.stop_decel_mps2,
    }.get(action, 0.0)


def integrate(s_m: float, speed_mps: float, accel_mps2: float, dt: float) -> Tuple[float, float]:
    """Constant-acceleration step; a decelerating vehicle stops and stays at rest."""
    if accel_mps2 < 0 and speed_mps + accel_mps2 * dt < 0:
        t_stop = speed_mps / -accel_mps2
        return s_m + 0.5 * speed_mps * t_stop, 0.0
    return s_m + speed_mps * dt + 0.5 * accel_mps2 * dt * dt, speed_mps + accel_mps2 * dt


def lane_change_target(world: WorldState, network: RoadNetwork, action: ManeuverAction) -> Optional[int]:
    """Lane a lane change action steers toward, or None when it aborts an opposite change.

    Raises:
        InfeasibleAction: If a new lane change has no accessible neighbor lane
    """
    ego = world.ego
    desired = network.lane(ego.lane).neighbor(action.direction)
    if ego.changing_lane and ego.lane_change_target != desired:
        return None
    if desired is None:
        raise InfeasibleAction(action, f"lane {ego.lane} has no {action.direction.value} neighbor")
    if not ego.changing_lane and not network.lane(desired).accessible_at(ego.s_m):
        raise InfeasibleAction(action, f"lane {desired} is not accessible at s={ego.s_m:.1f} m")
    return desired


def is_feasible(world: WorldState, network: RoadNetwork, action: ManeuverAction) -> bool:
    if not action.is_lane_change:
        return True
    try:
        lane_change_target(world, network, action)
    except InfeasibleAction:
        return False
    return True


def predictably_fatal(
    world: WorldState,
    network: RoadNetwork,
    action: ManeuverAction,
    params: DynamicsParams,
    duration_s: float,
    model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED,
) -> bool:
    """
    Whether ``advance`` with ``action`` would end in a collision, past a lane
    end or raise InfeasibleAction, replayed on the same sub-step grid with
    closed-form positions instead of intermediate worlds.

    Only constant-speed traffic is predicted; under IDM this returns False
    and the caller has to step.
    """
    if model is not OtherVehicleModel.CONSTANT_SPEED:
        return False
    ego = world.ego
    mission = network.mission
    accel = nominal_accel(action, params)
    steps = max(1, int(round(duration_s / params.substep_s)))
    dt = duration_s / steps
    rate = dt / params.lane_change_duration_s
    lane, progress, target = ego.lane, ego.lateral_progress, ego.lane_change_target
    steering = action.is_lane_change
    reach = COLLISION_DISTANCE_M + duration_s * (ego.speed_mps + abs(accel) * duration_s)
    nearby = [o for o in world.others if abs(o.s_m - ego.s_m) < reach + duration_s * o.speed_mps]
    if not nearby:
        travel = integrate(ego.s_m, ego.speed_mps, max(accel, 0.0), duration_s)[0]
        lanes = {ego.lane, ego.lane_change_target}
        if steering:
            lanes.add(network.lane(ego.lane).neighbor(action.direction) if ego.lane_change_target is None else None)
        lanes.discard(None)
        # a missing neighbor for a new lane change is left to the sub-step replay
        if not (steering and ego.lane_change_target is None and len(lanes) == 1) and all(
                _clear_between(network, lane_id, ego.s_m, travel) for lane_id in lanes):
            return False

    s_m = ego.s_m
    for k in range(1, steps + 1):
        if steering:
            desired = network.lane(lane).neighbor(action.direction)
            if target is not None and target != desired:
                steer = None
            elif desired is None or (target is None and not network.lane(desired).accessible_at(s_m)):
                return True
            else:
                steer = desired
        else:
            steer = None
        if steer is not None:
            target, progress = steer, min(1.0, progress + rate)
        elif target is not None:
            progress -= rate
            if progress <= EPS:
                progress, target = 0.0, None
        if target is not None and progress >= 1.0 - EPS:
            lane, progress, target = target, 0.0, None
            steering = False

        t = k * dt
        s_m = min(integrate(ego.s_m, ego.speed_mps, accel, t)[0], network.lane(lane).length_m)
        lanes = (lane,) if target is None else (lane, target)
        for occupied in lanes:
            road = network.lane(occupied)
            if (road.ends_at_m is not None and s_m > road.ends_at_m + EPS) or not road.accessible_at(s_m):
                return True
        for other in nearby:
            other_s = other.s_m + other.speed_mps * t
            if (other.lane in lanes and other_s <= network.lane(other.lane).length_m
                    and abs(other_s - s_m) < COLLISION_DISTANCE_M):
                return True
        if s_m >= network.lane(lane).length_m - EPS:
            return False
        if mission.kind is MissionKind.TAKE_EXIT and lane == mission.target_lane and target is None:
            return False
        if (mission.must_be_in_lane_by_m is not None and s_m > mission.must_be_in_lane_by_m + EPS
                and not (lane == mission.target_lane and target is None)):
            return False
    return False


def _clear_between(network: RoadNetwork, lane_id: int, start_m: float, end_m: float) -> bool:
    road = network.lane(lane_id)
    if road.ends_at_m is not None and end_m > road.ends_at_m:
        return False
    return road.accessible_at(start_m) and road.accessible_at(min(end_m, road.length_m))


def apply_ego_action(
    world: WorldState,
    network: RoadNetwork,
    action: ManeuverAction,
    params: DynamicsParams,
    dt: float,
    model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED,
) -> WorldState:
    """
    Advance the world by ``dt`` seconds with the ego holding ``action``.

    Args:
        world: Current world
        network: Road the world lives on
        action: Ego maneuver held during the step
        params: Dynamics parameters
        dt: Step length in seconds, > 0
        model: Motion model of the interacting vehicles

    Returns:
        The successor world

    Raises:
        InfeasibleAction: If a lane change is requested toward a missing or inaccessible lane
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    ego = world.ego
    accel = nominal_accel(action, params)
    s_m, speed = integrate(ego.s_m, ego.speed_mps, accel, dt)

    lane, progress, target = ego.lane, ego.lateral_progress, ego.lane_change_target
    rate = dt / params.lane_change_duration_s
    steer = lane_change_target(world, network, action) if action.is_lane_change else None
    if steer is not None:
        target, progress = steer, min(1.0, progress + rate)
    elif target is not None:
        progress -= rate
        if progress <= EPS:
            progress, target = 0.0, None
    if target is not None and progress >= 1.0 - EPS:
        lane, progress, target = target, 0.0, None

    s_m = min(s_m, network.lane(lane).length_m)
    new_ego = VehicleState(
        id=ego.id,
        lane=lane,
        s_m=s_m,
        speed_mps=speed,
        accel_mps2=accel,
        lateral_progress=progress,
        lane_change_target=target,
    )
    stepped = step_others(world, model, params.idm, dt, network)
    return WorldState(ego=new_ego, others=stepped.others, time_s=world.time_s + dt)


def idm_acceleration(
    speed_mps: float,
    desired_speed_mps: float,
    params: IDMParams,
    gap_m: Optional[float] = None,
    leader_speed_mps: Optional[float] = None,
) -> float:
    """IDM acceleration; a missing leader means an infinite gap."""
    free_road = 1.0 - (speed_mps / desired_speed_mps) ** params.delta
    if gap_m is None or math.isinf(gap_m):
        return params.max_accel_mps2 * free_road
    dv = speed_mps - (leader_speed_mps if leader_speed_mps is not None else speed_mps)
    dynamic = speed_mps * params.time_headway_s + speed_mps * dv / (
        2.0 * math.sqrt(params.max_accel_mps2 * params.comfort_decel_mps2))
    s_star = params.min_gap_m + max(0.0, dynamic)
    gap = max(gap_m, 1e-3)
    return params.max_accel_mps2 * (free_road - (s_star / gap) ** 2)


def _desired_speed(vehicle: VehicleState, params: IDMParams, network: Optional[RoadNetwork]) -> float:
    if params.desired_speed_mps is not None:
        return params.desired_speed_mps
    if network is None:
        raise ValueError("IDM without desired_speed_mps needs the road network for speed limits")
    return network.lane(vehicle.lane).speed_limit_mps


def step_others(
    world: WorldState,
    model: OtherVehicleModel,
    params: IDMParams,
    dt: float,
    network: Optional[RoadNetwork] = None,
) -> WorldState:
    """
    Advance every interacting vehicle by ``dt`` seconds.

    Vehicles that drive past the end of their lane leave the world when a
    network is given. The ego vehicle is left untouched.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    everyone: List[VehicleState] = [world.ego] + list(world.others)
    moved: List[VehicleState] = []
    for vehicle in world.others:
        if model is OtherVehicleModel.CONSTANT_SPEED:
            accel = 0.0
        else:
            leader = _idm_leader(vehicle, everyone)
            accel = idm_acceleration(
                vehicle.speed_mps,
                _desired_speed(vehicle, params, network),
                params,
                gap_m=None if leader is None else leader.s_m - vehicle.s_m,
                leader_speed_mps=None if leader is None else leader.speed_mps,
            )
        s_m, speed = integrate(vehicle.s_m, vehicle.speed_mps, accel, dt)
        if network is not None and s_m > network.lane(vehicle.lane).length_m:
            continue
        moved.append(replace(vehicle, s_m=s_m, speed_mps=max(0.0, speed), accel_mps2=accel))
    return WorldState(ego=world.ego, others=tuple(moved), time_s=world.time_s)


def _idm_leader(vehicle: VehicleState, everyone: List[VehicleState]) -> Optional[VehicleState]:
    best = None
    for other in everyone:
        if other.id == vehicle.id or vehicle.lane not in other.occupied_lanes:
            continue
        if other.s_m > vehicle.s_m and (best is None or other.s_m < best.s_m):
            best = other
    return best


def advance(
    world: WorldState,
    network: RoadNetwork,
    action: ManeuverAction,
    params: DynamicsParams,
    duration_s: float,
    model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED,
) -> WorldState:
    """
    Hold ``action`` for ``duration_s`` seconds, sub-stepped at ``params.substep_s``.

    Once a lane change completes the ego keeps its lane at constant speed for
    the rest of the duration. Terminal worlds (success or failure) are
    absorbing: the world freezes and only the clock moves on.

    Raises:
        InfeasibleAction: If ``action`` cannot be started from ``world``
    """
    steps = max(1, int(round(duration_s / params.substep_s)))
    dt = duration_s / steps
    end_time = world.time_s + duration_s
    if mission_status(world, network) is not MissionStatus.IN_PROGRESS:
        return replace(world, time_s=end_time)
    current = action
    state = world
    for _ in range(steps):
        lane_before = state.ego.lane
        state = apply_ego_action(state, network, current, params, dt, model)
        if current.is_lane_change and state.ego.lane != lane_before:
            current = ManeuverAction.KEEP_LANE_SAME_SPEED
        if mission_status(state, network) is not MissionStatus.IN_PROGRESS:
            break
    return replace(state, time_s=end_time)


def rollout_table(
    world: WorldState,
    network: RoadNetwork,
    params: DynamicsParams,
    duration_s: float,
    model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED,
) -> Dict[ManeuverAction, WorldState]:
    """Successor of every feasible action after ``duration_s`` seconds."""
    table: Dict[ManeuverAction, WorldState] = {}
    for action in ALL_ACTIONS:
        try:
            table[action] = advance(world, network, action, params, duration_s, model)
        except InfeasibleAction:
            continue
    return table
