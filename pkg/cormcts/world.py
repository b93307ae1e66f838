"""
Road geometry, vehicle/world state, scenario definition and ingestion.

Geometry is one-dimensional per lane: a vehicle is located by a lane id and
a longitudinal position ``s_m``. All lanes of a road share the same
longitudinal frame, so a lane change keeps ``s_m``.
"""
import json
import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .config import (
    MAX_SEED,
    DynamicsParams,
    FixedHorizonConfig,
    SearchConfig,
    UtilityWeights,
    to_plain,
    with_overrides,
)
from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

KMH_TO_MPS = 1.0 / 3.6
COLLISION_DISTANCE_M = 5.0
EPS = 1e-9


class MissionKind(Enum):
    REACH_END = "reach_end"
    TAKE_EXIT = "take_exit"


class MissionStatus(Enum):
    IN_PROGRESS = "in_progress"
    SUCCESS = "success"
    FAILURE = "failure"


class OtherVehicleModel(Enum):
    CONSTANT_SPEED = "constant_speed"
    IDM = "idm"


class Direction(Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Lane:
    id: int
    length_m: float
    speed_limit_mps: float
    left_neighbor: Optional[int] = None
    right_neighbor: Optional[int] = None
    ends_at_m: Optional[float] = None
    exit_window_m: Optional[Tuple[float, float]] = None
    is_exit: bool = False

    def neighbor(self, direction: Direction) -> Optional[int]:
        return self.left_neighbor if direction is Direction.LEFT else self.right_neighbor

    def accessible_at(self, s_m: float) -> bool:
        """Whether a vehicle may occupy this lane at longitudinal position ``s_m``."""
        if self.exit_window_m is not None and self.is_exit:
            start, end = self.exit_window_m
            return start - EPS <= s_m <= end + EPS
        return True


@dataclass(frozen=True)
class MissionGoal:
    kind: MissionKind
    target_lane: int
    must_be_in_lane_by_m: Optional[float] = None


@dataclass(frozen=True)
class RoadNetwork:
    lanes: Tuple[Lane, ...]
    mission: MissionGoal

    def __post_init__(self):
        object.__setattr__(self, "lanes", tuple(self.lanes))
        object.__setattr__(self, "_by_id", {lane.id: lane for lane in self.lanes})

    def lane(self, lane_id: int) -> Lane:
        try:
            return self._by_id[lane_id]
        except KeyError:
            raise ValidationError("network", f"unknown lane {lane_id!r}")

    def has_lane(self, lane_id: Optional[int]) -> bool:
        return lane_id in self._by_id

    def lane_hops(self, from_lane: int, to_lane: int) -> Optional[int]:
        """Number of lane changes separating two lanes, None when unreachable."""
        frontier = [from_lane]
        seen = {from_lane: 0}
        while frontier:
            current = frontier.pop(0)
            if current == to_lane:
                return seen[current]
            lane = self.lane(current)
            for nxt in (lane.left_neighbor, lane.right_neighbor):
                if nxt is not None and nxt not in seen:
                    seen[nxt] = seen[current] + 1
                    frontier.append(nxt)
        return None


@dataclass(frozen=True)
class VehicleState:
    id: int
    lane: int
    s_m: float
    speed_mps: float
    accel_mps2: float = 0.0
    lateral_progress: float = 0.0
    lane_change_target: Optional[int] = None

    def __post_init__(self):
        if self.speed_mps < 0:
            raise ValidationError(f"vehicle[{self.id}].speed_mps", "must be >= 0")
        if not 0.0 <= self.lateral_progress <= 1.0:
            raise ValidationError(f"vehicle[{self.id}].lateral_progress", "must lie in [0, 1]")
        if (self.lane_change_target is not None) != (self.lateral_progress > 0):
            raise ValidationError(
                f"vehicle[{self.id}].lane_change_target",
                "must be set exactly when lateral_progress > 0",
            )

    @property
    def occupied_lanes(self) -> FrozenSet[int]:
        if self.lane_change_target is None:
            return frozenset((self.lane,))
        return frozenset((self.lane, self.lane_change_target))

    @property
    def changing_lane(self) -> bool:
        return self.lane_change_target is not None


@dataclass(frozen=True)
class WorldState:
    ego: VehicleState
    others: Tuple[VehicleState, ...] = ()
    time_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "others", tuple(self.others))
        if self.time_s < 0:
            raise ValidationError("time_s", "must be >= 0")
        if any(o.id == self.ego.id for o in self.others):
            raise ValidationError("others", f"id {self.ego.id} is used by the ego vehicle")


@dataclass(frozen=True)
class ScenarioConfig:
    network: RoadNetwork
    initial: WorldState
    other_vehicle_model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED
    duration_s: float = 60.0
    replan_period_s: float = 2.0
    rng_seed: int = 0
    name: str = "scenario"
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    weights: UtilityWeights = field(default_factory=UtilityWeights)
    search: SearchConfig = field(default_factory=SearchConfig)
    fixed_horizon: FixedHorizonConfig = field(default_factory=FixedHorizonConfig)

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValidationError("duration_s", "must be > 0")
        if not self.replan_period_s > 0:
            raise ValidationError("replan_period_s", "must be > 0")
        if not 0 <= self.rng_seed < MAX_SEED:
            raise ValidationError("rng_seed", "must be a 64-bit unsigned integer")
        validate_network(self.network)
        validate_world(self.initial, self.network)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

def validate_network(network: RoadNetwork) -> None:
    """Check lane and mission invariants, raising ValidationError on the first violation."""
    seen = set()
    for index, lane in enumerate(network.lanes):
        path = f"network[{index}]"
        if lane.id in seen:
            raise ValidationError(f"{path}.id", f"duplicate lane id {lane.id}")
        seen.add(lane.id)
        if not lane.length_m > 0:
            raise ValidationError(f"{path}.length_m", "must be > 0")
        if not lane.speed_limit_mps > 0:
            raise ValidationError(f"{path}.speed_limit", "must be > 0")
        if lane.ends_at_m is not None and not 0 < lane.ends_at_m <= lane.length_m:
            raise ValidationError(f"{path}.ends_at_m", "must lie in (0, length_m]")
        if lane.exit_window_m is not None:
            start, end = lane.exit_window_m
            if not 0 <= start < end <= lane.length_m:
                raise ValidationError(f"{path}.exit_window_m", "must satisfy 0 <= start < end <= length_m")

    for index, lane in enumerate(network.lanes):
        path = f"network[{index}]"
        for direction, mirror in ((Direction.LEFT, Direction.RIGHT), (Direction.RIGHT, Direction.LEFT)):
            other_id = lane.neighbor(direction)
            if other_id is None:
                continue
            if other_id not in seen:
                raise ValidationError(f"{path}.{direction.value}", f"unknown lane {other_id}")
            if network.lane(other_id).neighbor(mirror) != lane.id:
                raise ValidationError(
                    f"{path}.{direction.value}",
                    f"lane {other_id} does not list lane {lane.id} as its {mirror.value} neighbor",
                )

    mission = network.mission
    if mission.target_lane not in seen:
        raise ValidationError("mission.target_lane", f"unknown lane {mission.target_lane}")
    if mission.must_be_in_lane_by_m is not None:
        target = network.lane(mission.target_lane)
        extents = [target.length_m] + [
            network.lane(n).length_m
            for n in (target.left_neighbor, target.right_neighbor) if n is not None
        ]
        if not 0 <= mission.must_be_in_lane_by_m <= max(extents):
            raise ValidationError("mission.must_be_in_lane_by_m", "must lie within the target or adjacent lane extent")


def validate_world(world: WorldState, network: RoadNetwork, path: str = "initial") -> None:
    for label, vehicle in [("ego", world.ego)] + [(f"others[{i}]", o) for i, o in enumerate(world.others)]:
        if not network.has_lane(vehicle.lane):
            raise ValidationError(f"{path}.{label}.lane", f"unknown lane {vehicle.lane}")
        if vehicle.lane_change_target is not None and not network.has_lane(vehicle.lane_change_target):
            raise ValidationError(f"{path}.{label}.lane_change_target", "unknown lane")
        length = network.lane(vehicle.lane).length_m
        if not 0 <= vehicle.s_m <= length:
            raise ValidationError(f"{path}.{label}.s_m", f"must lie in [0, {length}]")
    ids = [o.id for o in world.others]
    if len(ids) != len(set(ids)):
        raise ValidationError(f"{path}.others", "vehicle ids must be unique")


# --------------------------------------------------------------------------
# Geometry queries
# --------------------------------------------------------------------------

def shares_lane(a: VehicleState, b: VehicleState) -> bool:
    return bool(a.occupied_lanes & b.occupied_lanes)


def in_collision(world: WorldState) -> bool:
    ego = world.ego
    return any(
        shares_lane(ego, other) and abs(other.s_m - ego.s_m) < COLLISION_DISTANCE_M
        for other in world.others
    )


def leader_of(vehicle: VehicleState, candidates: Iterable[VehicleState]) -> Optional[VehicleState]:
    """Nearest vehicle strictly ahead sharing a lane with ``vehicle``."""
    best = None
    for other in candidates:
        if other.id == vehicle.id or not shares_lane(vehicle, other):
            continue
        if other.s_m > vehicle.s_m and (best is None or other.s_m < best.s_m):
            best = other
    return best


def past_lane_end(vehicle: VehicleState, network: RoadNetwork) -> bool:
    for lane_id in vehicle.occupied_lanes:
        lane = network.lane(lane_id)
        if lane.ends_at_m is not None and vehicle.s_m > lane.ends_at_m + EPS:
            return True
        if not lane.accessible_at(vehicle.s_m):
            return True
    return False


def fully_in(vehicle: VehicleState, lane_id: int) -> bool:
    return vehicle.lane == lane_id and not vehicle.changing_lane


def mission_status(world: WorldState, network: RoadNetwork) -> MissionStatus:
    """Classify a world as in progress, succeeded or failed for the network's mission."""
    ego = world.ego
    mission = network.mission
    if in_collision(world) or past_lane_end(ego, network):
        return MissionStatus.FAILURE
    in_target = fully_in(ego, mission.target_lane)
    if (mission.must_be_in_lane_by_m is not None
            and ego.s_m > mission.must_be_in_lane_by_m + EPS and not in_target):
        return MissionStatus.FAILURE
    if in_target:
        target = network.lane(mission.target_lane)
        if mission.kind is MissionKind.TAKE_EXIT:
            if target.accessible_at(ego.s_m):
                return MissionStatus.SUCCESS
        elif ego.s_m >= target.length_m - EPS:
            return MissionStatus.SUCCESS
    return MissionStatus.IN_PROGRESS


# --------------------------------------------------------------------------
# Scenario files
# --------------------------------------------------------------------------

_TOP_KEYS = {
    "name", "network", "mission", "initial", "other_vehicle_model", "duration_s",
    "replan_period_s", "rng_seed", "dynamics", "utility_weights", "search", "fixed_horizon",
}
_LANE_KEYS = {"id", "length_m", "speed_limit_kmh", "speed_limit_mps", "left", "right",
              "ends_at_m", "exit_window_m", "is_exit"}
_MISSION_KEYS = {"kind", "target_lane", "must_be_in_lane_by_m"}
_VEHICLE_KEYS = {"id", "lane", "s_m", "speed_kmh", "speed_mps"}
_REQUIRED_TOP = ("network", "mission", "initial", "duration_s", "replan_period_s", "rng_seed")


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _check_keys(obj: Any, allowed, path: str) -> Mapping[str, Any]:
    if not isinstance(obj, Mapping):
        raise ValidationError(path, "must be an object")
    for key in obj:
        if key not in allowed:
            raise ValidationError(_join(path, key), "unknown key")
    return obj


def _require(obj: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in obj:
        raise ValidationError(_join(path, key), "missing")
    return obj[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"must be a number, got {value!r}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"must be an integer, got {value!r}")
    return value


def _optional_int(value: Any, path: str) -> Optional[int]:
    return None if value is None else _integer(value, path)


def _speed(obj: Mapping[str, Any], base: str, path: str) -> float:
    kmh, mps = f"{base}_kmh", f"{base}_mps"
    if (kmh in obj) == (mps in obj):
        raise ValidationError(f"{path}.{base}", f"exactly one of {kmh} or {mps} is required")
    if kmh in obj:
        return _number(obj[kmh], f"{path}.{kmh}") * KMH_TO_MPS
    return _number(obj[mps], f"{path}.{mps}")


def _parse_lane(raw: Any, path: str) -> Lane:
    raw = _check_keys(raw, _LANE_KEYS, path)
    window = raw.get("exit_window_m")
    if window is not None:
        if not isinstance(window, (list, tuple)) or len(window) != 2:
            raise ValidationError(f"{path}.exit_window_m", "must be a [start, end] pair")
        window = (_number(window[0], f"{path}.exit_window_m[0]"), _number(window[1], f"{path}.exit_window_m[1]"))
    ends = raw.get("ends_at_m")
    is_exit = raw.get("is_exit", False)
    if not isinstance(is_exit, bool):
        raise ValidationError(f"{path}.is_exit", "must be a boolean")
    return Lane(
        id=_integer(_require(raw, "id", path), f"{path}.id"),
        length_m=_number(_require(raw, "length_m", path), f"{path}.length_m"),
        speed_limit_mps=_speed(raw, "speed_limit", path),
        left_neighbor=_optional_int(raw.get("left"), f"{path}.left"),
        right_neighbor=_optional_int(raw.get("right"), f"{path}.right"),
        ends_at_m=None if ends is None else _number(ends, f"{path}.ends_at_m"),
        exit_window_m=window,
        is_exit=is_exit,
    )


def _parse_vehicle(raw: Any, path: str) -> VehicleState:
    raw = _check_keys(raw, _VEHICLE_KEYS, path)
    speed = _speed(raw, "speed", path)
    if speed < 0:
        raise ValidationError(f"{path}.speed", "must be >= 0")
    return VehicleState(
        id=_integer(_require(raw, "id", path), f"{path}.id"),
        lane=_integer(_require(raw, "lane", path), f"{path}.lane"),
        s_m=_number(_require(raw, "s_m", path), f"{path}.s_m"),
        speed_mps=speed,
    )


def scenario_from_dict(data: Any) -> ScenarioConfig:
    """Build a validated ScenarioConfig from decoded scenario JSON."""
    data = _check_keys(data, _TOP_KEYS, "")
    for key in _REQUIRED_TOP:
        _require(data, key, "")

    lanes_raw = data["network"]
    if not isinstance(lanes_raw, list) or not lanes_raw:
        raise ValidationError("network", "must be a non-empty array of lanes")
    lanes = tuple(_parse_lane(raw, f"network[{i}]") for i, raw in enumerate(lanes_raw))

    mission_raw = _check_keys(data["mission"], _MISSION_KEYS, "mission")
    try:
        kind = MissionKind(_require(mission_raw, "kind", "mission"))
    except ValueError:
        raise ValidationError("mission.kind", f"invalid value {mission_raw['kind']!r}")
    must_by = mission_raw.get("must_be_in_lane_by_m")
    mission = MissionGoal(
        kind=kind,
        target_lane=_integer(_require(mission_raw, "target_lane", "mission"), "mission.target_lane"),
        must_be_in_lane_by_m=None if must_by is None else _number(must_by, "mission.must_be_in_lane_by_m"),
    )
    network = RoadNetwork(lanes=lanes, mission=mission)

    initial_raw = _check_keys(data["initial"], {"ego", "others"}, "initial")
    others_raw = initial_raw.get("others", [])
    if not isinstance(others_raw, list):
        raise ValidationError("initial.others", "must be an array")
    initial = WorldState(
        ego=_parse_vehicle(_require(initial_raw, "ego", "initial"), "initial.ego"),
        others=tuple(_parse_vehicle(raw, f"initial.others[{i}]") for i, raw in enumerate(others_raw)),
        time_s=0.0,
    )

    try:
        model = OtherVehicleModel(data.get("other_vehicle_model", OtherVehicleModel.CONSTANT_SPEED.value))
    except ValueError:
        raise ValidationError("other_vehicle_model", f"invalid value {data['other_vehicle_model']!r}")

    seed = _integer(data["rng_seed"], "rng_seed")
    if not 0 <= seed < MAX_SEED:
        raise ValidationError("rng_seed", "must be a 64-bit unsigned integer")
    search = with_overrides(SearchConfig(rng_seed=seed),
                            data.get("search"), "search")
    weights_raw = data.get("utility_weights")
    weights = UtilityWeights()
    if weights_raw is not None:
        weights = with_overrides(weights, weights_raw, "utility_weights")

    return ScenarioConfig(
        network=network,
        initial=initial,
        other_vehicle_model=model,
        duration_s=_number(data["duration_s"], "duration_s"),
        replan_period_s=_number(data["replan_period_s"], "replan_period_s"),
        rng_seed=seed,
        name=str(data.get("name", "scenario")),
        dynamics=with_overrides(DynamicsParams(), data.get("dynamics"), "dynamics"),
        weights=weights,
        search=search,
        fixed_horizon=with_overrides(FixedHorizonConfig(), data.get("fixed_horizon"), "fixed_horizon"),
    )


def load_scenario(path: str) -> ScenarioConfig:
    """
    Load and validate a scenario file.

    Args:
        path: Path to a UTF-8 JSON scenario file

    Returns:
        A fully validated ScenarioConfig

    Raises:
        ParseError: If the file is not valid JSON
        ValidationError: If any invariant is violated (the error carries the field path)
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ParseError(f"{path}: {e}") from e
    config = scenario_from_dict(data)
    if "name" not in data:
        config = replace(config, name=os.path.splitext(os.path.basename(path))[0])
    logger.debug("Loaded scenario %s from %s", config.name, path)
    return config


def _vehicle_to_dict(vehicle: VehicleState) -> Dict[str, Any]:
    return {"id": vehicle.id, "lane": vehicle.lane, "s_m": vehicle.s_m, "speed_mps": vehicle.speed_mps}


def scenario_to_dict(config: ScenarioConfig) -> Dict[str, Any]:
    """Serialize a scenario in the file schema; speeds are written in m/s so reloading is exact."""
    lanes: List[Dict[str, Any]] = []
    for lane in config.network.lanes:
        lanes.append({
            "id": lane.id,
            "length_m": lane.length_m,
            "speed_limit_mps": lane.speed_limit_mps,
            "left": lane.left_neighbor,
            "right": lane.right_neighbor,
            "ends_at_m": lane.ends_at_m,
            "exit_window_m": list(lane.exit_window_m) if lane.exit_window_m is not None else None,
            "is_exit": lane.is_exit,
        })
    mission = config.network.mission
    return {
        "name": config.name,
        "network": lanes,
        "mission": {
            "kind": mission.kind.value,
            "target_lane": mission.target_lane,
            "must_be_in_lane_by_m": mission.must_be_in_lane_by_m,
        },
        "initial": {
            "ego": _vehicle_to_dict(config.initial.ego),
            "others": [_vehicle_to_dict(o) for o in config.initial.others],
        },
        "other_vehicle_model": config.other_vehicle_model.value,
        "duration_s": config.duration_s,
        "replan_period_s": config.replan_period_s,
        "rng_seed": config.rng_seed,
        "dynamics": to_plain(config.dynamics),
        "utility_weights": to_plain(config.weights),
        "search": to_plain(config.search),
        "fixed_horizon": to_plain(config.fixed_horizon),
    }


def dump_scenario(config: ScenarioConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_dict(config), f, indent=2)


def bundled_scenario_path(name: str) -> str:
    """Path of a scenario file shipped with the package."""
    return os.path.join(os.path.dirname(__file__), "scenarios", f"{name}.json")
