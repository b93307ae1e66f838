"""
cormcts - tactical maneuver planning for automated driving with an anytime
Monte Carlo Tree Search over a lane-based world
"""

from .errors import (
    CormctsError,
    ParseError,
    ValidationError,
    InfeasibleAction,
    TerminalLeaf,
    NoFeasibleAction,
    EmptyTree,
)
from .config import (
    DynamicsParams,
    IDMParams,
    UtilityWeights,
    SearchBudget,
    SearchConfig,
    DecisionRule,
    FixedHorizonConfig,
)
from .world import (
    Lane,
    MissionGoal,
    MissionKind,
    MissionStatus,
    RoadNetwork,
    VehicleState,
    WorldState,
    ScenarioConfig,
    OtherVehicleModel,
    load_scenario,
    mission_status,
)
from .dynamics import ManeuverAction, advance, idm_acceleration
from .utility import ProfitBreakdown, evaluate_profit
from .safeguards import assert_invariant, require, ensure, InvariantViolation
from .metrics import observe, MetricsCollector
from .mcts import TreeNode, SearchStats, plan, search, best_root_action
from .baseline import plan_fixed
from .store import ResultStore
from .harness import RunTrace, BatchReport, Outcome, run_scenario, run_batch, replay_trace

__version__ = "0.1.0"

__all__ = [
    # Errors
    "CormctsError",
    "ParseError",
    "ValidationError",
    "InfeasibleAction",
    "TerminalLeaf",
    "NoFeasibleAction",
    "EmptyTree",

    # Configuration
    "DynamicsParams",
    "IDMParams",
    "UtilityWeights",
    "SearchBudget",
    "SearchConfig",
    "DecisionRule",
    "FixedHorizonConfig",

    # World model
    "Lane",
    "MissionGoal",
    "MissionKind",
    "MissionStatus",
    "RoadNetwork",
    "VehicleState",
    "WorldState",
    "ScenarioConfig",
    "OtherVehicleModel",
    "load_scenario",
    "mission_status",

    # Dynamics and utility
    "ManeuverAction",
    "advance",
    "idm_acceleration",
    "ProfitBreakdown",
    "evaluate_profit",

    # Safeguards
    "assert_invariant",
    "require",
    "ensure",
    "InvariantViolation",

    # Metrics
    "observe",
    "MetricsCollector",

    # Planners
    "TreeNode",
    "SearchStats",
    "plan",
    "search",
    "best_root_action",
    "plan_fixed",

    # Harness
    "ResultStore",
    "RunTrace",
    "BatchReport",
    "Outcome",
    "run_scenario",
    "run_batch",
    "replay_trace",
]
