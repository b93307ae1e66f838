"""
Tunable parameters of the dynamics, utility evaluator and planners.

Every parameter set is an immutable dataclass validated on construction.
Scenario files and CLI flags override individual fields through
``with_overrides``, which rejects unknown keys.
"""
import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Optional, TypeVar, Union, get_args, get_origin

from .errors import ValidationError

T = TypeVar("T")

MAX_SEED = 2 ** 64


def _positive(path: str, value: float) -> None:
    if not value > 0:
        raise ValidationError(path, f"must be > 0, got {value!r}")


@dataclass(frozen=True)
class IDMParams:
    """Intelligent Driver Model parameters.

    ``desired_speed_mps`` left as None means "the speed limit of the lane the
    vehicle is driving in".
    """
    desired_speed_mps: Optional[float] = None
    max_accel_mps2: float = 1.5
    comfort_decel_mps2: float = 2.0
    min_gap_m: float = 2.0
    time_headway_s: float = 1.5
    delta: float = 4.0

    def __post_init__(self):
        if self.desired_speed_mps is not None:
            _positive("idm.desired_speed_mps", self.desired_speed_mps)
        _positive("idm.max_accel_mps2", self.max_accel_mps2)
        _positive("idm.comfort_decel_mps2", self.comfort_decel_mps2)
        _positive("idm.min_gap_m", self.min_gap_m)
        _positive("idm.time_headway_s", self.time_headway_s)
        if not self.delta >= 1:
            raise ValidationError("idm.delta", f"must be >= 1, got {self.delta!r}")


@dataclass(frozen=True)
class DynamicsParams:
    accel_mps2: float = 1.5
    decel_mps2: float = 2.0
    stop_decel_mps2: float = 4.0
    lane_change_duration_s: float = 3.0
    action_duration_s: float = 2.0
    substep_s: float = 0.1
    idm: IDMParams = field(default_factory=IDMParams)

    def __post_init__(self):
        for name in ("accel_mps2", "decel_mps2", "stop_decel_mps2",
                     "lane_change_duration_s", "action_duration_s", "substep_s"):
            _positive(f"dynamics.{name}", getattr(self, name))


@dataclass(frozen=True)
class UtilityWeights:
    w_safety: float = 0.30
    w_legality: float = 0.15
    w_mission: float = 0.30
    w_efficiency: float = 0.15
    w_comfort: float = 0.10

    def __post_init__(self):
        values = self.as_tuple()
        for name, value in zip(self.names(), values):
            if value < 0:
                raise ValidationError(f"utility_weights.{name}", "must be >= 0")
        if abs(math.fsum(values) - 1.0) > 1e-12:
            raise ValidationError("utility_weights", f"must sum to 1, got {math.fsum(values)!r}")

    @staticmethod
    def names():
        return ("w_safety", "w_legality", "w_mission", "w_efficiency", "w_comfort")

    def as_tuple(self):
        return (self.w_safety, self.w_legality, self.w_mission, self.w_efficiency, self.w_comfort)

    @classmethod
    def normalized(cls, **raw: float) -> "UtilityWeights":
        """Build weights from arbitrary non-negative magnitudes, rescaled to sum to 1."""
        values = [float(raw.get(name, 0.0)) for name in cls.names()]
        total = math.fsum(values)
        if total <= 0:
            raise ValidationError("utility_weights", "at least one weight must be positive")
        scaled = [v / total for v in values]
        # absorb the rounding residue in the largest weight
        largest = max(range(len(scaled)), key=lambda i: scaled[i])
        scaled[largest] = 1.0 - math.fsum(scaled[:largest] + scaled[largest + 1:])
        return cls(**dict(zip(cls.names(), scaled)))


class DecisionRule(Enum):
    ACCUMULATED = "accumulated"
    MEAN = "mean"


@dataclass(frozen=True)
class SearchBudget:
    """Anytime budget of one search. ``max_wall_time`` None means node cap only."""
    max_wall_time: Optional[float] = 1.0
    max_nodes: int = 50

    def __post_init__(self):
        if self.max_wall_time is not None:
            _positive("search.budget.max_wall_time", self.max_wall_time)
        _positive("search.budget.max_nodes", self.max_nodes)

    @property
    def deterministic(self) -> bool:
        return self.max_wall_time is None


@dataclass(frozen=True)
class SearchConfig:
    exploration_c: float = math.sqrt(2.0)
    gamma: float = 0.9
    # probability mass kept by lane-keeping actions right after a lane change
    lane_keep_bias_after_lane_change: float = 0.9
    pruning_enabled: bool = True
    budget: SearchBudget = field(default_factory=SearchBudget)
    rng_seed: int = 0
    decision_rule: DecisionRule = DecisionRule.ACCUMULATED

    def __post_init__(self):
        if self.exploration_c < 0:
            raise ValidationError("search.exploration_c", "must be >= 0")
        if not 0 < self.gamma <= 1:
            raise ValidationError("search.gamma", "must lie in (0, 1]")
        if not 0 <= self.lane_keep_bias_after_lane_change <= 1:
            raise ValidationError("search.lane_keep_bias_after_lane_change", "must lie in [0, 1]")
        if not 0 <= self.rng_seed < MAX_SEED:
            raise ValidationError("search.rng_seed", "must be a 64-bit unsigned integer")

    @property
    def lane_change_bias(self) -> float:
        return 1.0 - self.lane_keep_bias_after_lane_change


@dataclass(frozen=True)
class FixedHorizonConfig:
    horizon_s: float = 5.0

    def __post_init__(self):
        _positive("fixed_horizon.horizon_s", self.horizon_s)


def _checked_scalar(value: Any, annotation: Any, path: str) -> Any:
    """Check an override against the field annotation; ints widen to float."""
    if get_origin(annotation) is Union:
        allowed = get_args(annotation)
        if value is None and type(None) in allowed:
            return None
        (annotation,) = [a for a in allowed if a is not type(None)]
    if annotation is bool:
        if isinstance(value, bool):
            return value
        raise ValidationError(path, f"must be a boolean, got {value!r}")
    if annotation is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ValidationError(path, f"must be an integer, got {value!r}")
    if annotation is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if not math.isfinite(value):
                raise ValidationError(path, f"must be finite, got {value!r}")
            return float(value)
        raise ValidationError(path, f"must be a number, got {value!r}")
    if annotation is str and not isinstance(value, str):
        raise ValidationError(path, f"must be a string, got {value!r}")
    return value


def with_overrides(base: T, overrides: Optional[Mapping[str, Any]], path: str) -> T:
    """Return a copy of ``base`` with fields replaced from ``overrides``.

    Nested dataclass fields accept nested mappings; enum fields accept their
    string values. Unknown keys raise ValidationError.
    """
    if not overrides:
        return base
    if not isinstance(overrides, Mapping):
        raise ValidationError(path, "must be an object")
    known = {f.name: f for f in dataclasses.fields(base)}
    changes: Dict[str, Any] = {}
    for key, value in overrides.items():
        if key not in known:
            raise ValidationError(f"{path}.{key}", "unknown key")
        current = getattr(base, key)
        if dataclasses.is_dataclass(current):
            changes[key] = with_overrides(current, value, f"{path}.{key}")
        elif isinstance(current, Enum):
            try:
                changes[key] = type(current)(value)
            except ValueError:
                raise ValidationError(f"{path}.{key}", f"invalid value {value!r}")
        else:
            changes[key] = _checked_scalar(value, known[key].type, f"{path}.{key}")
    return dataclasses.replace(base, **changes)


def to_plain(value: Any) -> Any:
    """Convert a config dataclass tree into JSON-compatible values."""
    if dataclasses.is_dataclass(value):
        return {f.name: to_plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    return value
