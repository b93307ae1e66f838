"""
Fixed-horizon greedy planner used as the comparison baseline.

Every feasible action is held for the whole horizon and the resulting world
is scored once with the profit evaluator; the best score wins.
"""
import logging
from collections import OrderedDict
from typing import Dict, Optional, Tuple

from .config import DynamicsParams, FixedHorizonConfig, UtilityWeights
from .dynamics import ManeuverAction, rollout_table
from .errors import NoFeasibleAction
from .metrics import MetricsCollector, default_metrics, observe
from .utility import ProfitBreakdown, evaluate_profit
from .world import OtherVehicleModel, RoadNetwork, WorldState

logger = logging.getLogger(__name__)

PLANNER_NAME = "fixed"


def score_table(
    world: WorldState,
    network: RoadNetwork,
    config: FixedHorizonConfig,
    weights: UtilityWeights,
    params: DynamicsParams,
    model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED,
) -> "OrderedDict[ManeuverAction, ProfitBreakdown]":
    """Profit breakdown of every feasible action, in canonical action order."""
    table = rollout_table(world, network, params, config.horizon_s, model)
    return OrderedDict(
        (action, evaluate_profit(successor, network, action, weights, params))
        for action, successor in table.items()
    )


def plan_fixed(
    world: WorldState,
    network: RoadNetwork,
    config: FixedHorizonConfig,
    weights: UtilityWeights,
    params: DynamicsParams,
    model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED,
    metrics: Optional[MetricsCollector] = None,
) -> Tuple[ManeuverAction, Dict[ManeuverAction, float], Dict[ManeuverAction, ProfitBreakdown]]:
    """
    Choose the action whose horizon end state scores highest.

    Ties go to the action listed first in the canonical order.

    Returns:
        The chosen action, the score of every feasible action and their breakdowns

    Raises:
        NoFeasibleAction: If no action can be started from ``world``
    """
    metrics = metrics or default_metrics

    @observe(PLANNER_NAME, metrics)
    def _score():
        return score_table(world, network, config, weights, params, model)

    breakdowns = _score()
    if not breakdowns:
        raise NoFeasibleAction(f"no feasible action at t={world.time_s:.1f}s")

    scores = OrderedDict((action, b.total) for action, b in breakdowns.items())
    best = next(iter(scores))
    for action, value in scores.items():
        if value > scores[best]:
            best = action
    logger.debug("Fixed-horizon choice %s (%.4f)", best.value, scores[best])
    return best, scores, breakdowns
