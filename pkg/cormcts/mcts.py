"""
Anytime Monte Carlo Tree Search over tactical maneuvers.

Each iteration selects a node with UCB, expands exactly one child by
sampling an action, evaluates the child's state once with the profit
evaluator and backpropagates the discounted value to the root. The search
stops when the node cap or the wall-time budget is reached and returns the
root child with the largest accumulated profit.

The search itself is written against ``SearchDomain`` so that it can run on
the driving world (``DrivingDomain``) as well as on small synthetic domains.
"""
import logging
import math
import os
import time
from functools import partial
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .config import DecisionRule, DynamicsParams, SearchConfig, UtilityWeights
from .dynamics import ALL_ACTIONS, ManeuverAction, advance, is_feasible, predictably_fatal
from .errors import EmptyTree, InfeasibleAction, NoFeasibleAction, TerminalLeaf
from .metrics import MetricsCollector, default_metrics, observe
from .safeguards import assert_invariant, require
from .utility import ProfitBreakdown, evaluate_profit
from .world import MissionStatus, OtherVehicleModel, RoadNetwork, WorldState, mission_status

logger = logging.getLogger(__name__)

DETERMINISTIC_ENV = "CORMCTS_DETERMINISTIC"
ITERATIONS_PER_NODE = 4


class SearchDomain:
    """Transition model and evaluator the search runs on."""

    def actions(self, state) -> Sequence[Any]:
        raise NotImplementedError

    def is_feasible(self, state, action) -> bool:
        return True

    def is_doomed(self, state, action) -> bool:
        """Prediction, without stepping, that ``action`` leads to a zero-valued successor."""
        return False

    def step(self, state, action):
        """Successor of ``state`` under ``action``; raises InfeasibleAction."""
        raise NotImplementedError

    def evaluate(self, state, action) -> float:
        raise NotImplementedError

    def is_terminal(self, state) -> bool:
        raise NotImplementedError

    def is_goal(self, state) -> bool:
        """Terminal states that stay open to selection once reached."""
        return False

    def fallback_rank(self, state, action) -> float:
        """Order of zero-valued root successors when nothing else survives pruning."""
        return 0.0

    def is_lane_change(self, action) -> bool:
        return False

    def describe(self, node: "TreeNode") -> Dict[str, Any]:
        return {}


class DrivingDomain(SearchDomain):
    """Lane-based driving world evaluated with the profit function."""

    def __init__(
        self,
        network: RoadNetwork,
        weights: UtilityWeights,
        params: DynamicsParams,
        model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED,
    ):
        self.network = network
        self.weights = weights
        self.params = params
        self.model = model

    def actions(self, state: WorldState) -> Sequence[ManeuverAction]:
        return ALL_ACTIONS

    def is_feasible(self, state: WorldState, action: ManeuverAction) -> bool:
        return is_feasible(state, self.network, action)

    def is_doomed(self, state: WorldState, action: ManeuverAction) -> bool:
        return predictably_fatal(state, self.network, action, self.params, self.params.action_duration_s,
                                 self.model)

    def step(self, state: WorldState, action: ManeuverAction) -> WorldState:
        return advance(state, self.network, action, self.params, self.params.action_duration_s, self.model)

    def breakdown(self, state: WorldState, action: Optional[ManeuverAction]) -> ProfitBreakdown:
        return evaluate_profit(state, self.network, action, self.weights, self.params)

    def evaluate(self, state: WorldState, action: Optional[ManeuverAction]) -> float:
        return self.breakdown(state, action).total

    def is_terminal(self, state: WorldState) -> bool:
        return mission_status(state, self.network) is not MissionStatus.IN_PROGRESS

    def is_goal(self, state: WorldState) -> bool:
        return mission_status(state, self.network) is MissionStatus.SUCCESS

    def fallback_rank(self, state: WorldState, action: Optional[ManeuverAction]) -> float:
        scores = self.breakdown(state, action).scores()
        return math.fsum(w * x for w, x in zip(self.weights.as_tuple(), scores))

    def is_lane_change(self, action: Optional[ManeuverAction]) -> bool:
        return action is not None and action.is_lane_change

    def describe(self, node: "TreeNode") -> Dict[str, Any]:
        if node.infeasible:
            return {}
        return {"profit": self.breakdown(node.world, node.action).as_dict()}


class TreeNode:
    """
    Search tree node holding the tuple (v, m, U, ucb) plus its action edge
    and world snapshot.

    ``support`` and ``slots_left`` are filled on the first expansion; a node
    built by hand with children and no support counts as fully expanded.
    """

    def __init__(self, world, action=None, parent: Optional["TreeNode"] = None):
        self.world = world
        self.action = action
        self.parent = parent
        self.depth = 0 if parent is None else parent.depth + 1
        self.children: List["TreeNode"] = []
        self.v = 0.0
        self.m = 0
        self.U = 0.0
        self.ucb = math.inf
        self.evaluated = False
        self.terminal = False
        self.goal = False
        self.infeasible = False
        self.closed = False
        self.own_visits = 0
        self.support: Optional[List[Any]] = None
        self.slots_left: Optional[int] = None

    @property
    def mean_U(self) -> float:
        return self.U / self.m if self.m else 0.0

    def is_fully_expanded(self) -> bool:
        if self.slots_left is None:
            return bool(self.children)
        return self.slots_left <= 0

    def add_child(self, child: "TreeNode") -> "TreeNode":
        child.parent = self
        child.depth = self.depth + 1
        self.children.append(child)
        return child

    def iter_nodes(self) -> Iterator["TreeNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def __repr__(self):
        action = getattr(self.action, "value", self.action)
        return f"TreeNode(action={action}, depth={self.depth}, v={self.v:.3f}, m={self.m}, U={self.U:.3f})"


@dataclass
class SearchStats:
    iterations: int = 0
    node_count: int = 1
    elapsed_s: float = 0.0
    max_depth: int = 0
    zero_value_nodes: int = 0
    pruned_infeasible: int = 0
    pruned_zero_value: int = 0
    depth_histogram: List[int] = field(default_factory=list)
    root_children: List[Dict[str, Any]] = field(default_factory=list)

    def as_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        data = {
            "iterations": self.iterations,
            "node_count": self.node_count,
            "max_depth": self.max_depth,
            "zero_value_nodes": self.zero_value_nodes,
            "pruned_infeasible": self.pruned_infeasible,
            "pruned_zero_value": self.pruned_zero_value,
            "depth_histogram": self.depth_histogram,
            "root_children": self.root_children,
        }
        if include_timing:
            data["elapsed_ms"] = self.elapsed_s * 1000.0
        return data


@dataclass
class SearchResult:
    action: Any
    stats: SearchStats
    root: TreeNode


def ucb_value(node_mean_U: float, parent_visits: int, node_visits: int, c: float) -> float:
    """UCB score of a child; unvisited children score +inf."""
    if node_visits == 0:
        return math.inf
    return node_mean_U + c * math.sqrt(math.log(parent_visits) / node_visits)


def select_leaf(root: TreeNode, c: float, skip_closed: bool = False) -> TreeNode:
    """
    Descend from ``root`` through fully expanded nodes, following the child
    with the largest UCB (first child wins ties), until reaching a node that
    still has an action to expand or no children.

    With ``skip_closed`` children whose subtree is exhausted are ignored.
    """
    node = root
    while node.children and node.is_fully_expanded():
        best, best_score = None, -math.inf
        for child in node.children:
            if skip_closed and child.closed:
                continue
            score = ucb_value(child.mean_U, node.m, child.m, c)
            if best is None or score > best_score:
                best, best_score = child, score
        if best is None:
            break
        node = best
    return node


def expansion_probabilities(
    support: Sequence[Any],
    parent_action: Any,
    config: SearchConfig,
    domain: SearchDomain,
) -> np.ndarray:
    """Uniform over ``support`` unless the node was reached by a lane change,
    in which case lane-keeping actions share ``lane_keep_bias_after_lane_change``."""
    n = len(support)
    probs = np.full(n, 1.0 / n)
    if not domain.is_lane_change(parent_action):
        return probs
    changes = np.array([domain.is_lane_change(a) for a in support], dtype=bool)
    n_change = int(changes.sum())
    if n_change == 0 or n_change == n:
        return probs
    probs[~changes] = config.lane_keep_bias_after_lane_change / (n - n_change)
    probs[changes] = config.lane_change_bias / n_change
    return probs / probs.sum()


def expand(
    leaf: TreeNode,
    config: SearchConfig,
    rng: np.random.Generator,
    domain: SearchDomain,
    stats: Optional[SearchStats] = None,
) -> Optional[TreeNode]:
    """
    Sample one action at ``leaf`` and attach the resulting child.

    With pruning, infeasible actions are removed from the support before
    sampling, sampled successors with zero profit are discarded, and each
    action is expanded at most once. A sampled action the domain predicts to
    be doomed is discarded the same way without being stepped. When every
    root action is pruned, the best-ranked successor is kept anyway so the
    planner can still act. Without pruning every action stays in the
    support; an infeasible one yields a dead terminal child with v = 0.

    Returns:
        The new child, or None when ``leaf`` already has children and its
        remaining support was pruned away

    Raises:
        TerminalLeaf: If the leaf state is terminal
        NoFeasibleAction: If the leaf has no children and nothing can be expanded
    """
    stats = stats if stats is not None else SearchStats()
    if leaf.terminal or domain.is_terminal(leaf.world):
        raise TerminalLeaf(repr(leaf))

    if leaf.support is None:
        actions = list(domain.actions(leaf.world))
        if config.pruning_enabled:
            feasible = [a for a in actions if domain.is_feasible(leaf.world, a)]
            stats.pruned_infeasible += len(actions) - len(feasible)
            actions = feasible
        leaf.support = actions
        leaf.slots_left = len(actions)

    while leaf.slots_left > 0 and leaf.support:
        probs = expansion_probabilities(leaf.support, leaf.action, config, domain)
        index = int(rng.choice(len(leaf.support), p=probs))
        action = leaf.support[index]
        leaf.slots_left -= 1
        if config.pruning_enabled:
            del leaf.support[index]
            if domain.is_doomed(leaf.world, action):
                stats.pruned_zero_value += 1
                continue

        try:
            successor = domain.step(leaf.world, action)
        except InfeasibleAction:
            if config.pruning_enabled:
                stats.pruned_infeasible += 1
                continue
            child = TreeNode(leaf.world, action)
            child.terminal = child.evaluated = child.infeasible = True
            return leaf.add_child(child)

        child = TreeNode(successor, action)
        if config.pruning_enabled:
            child.v = domain.evaluate(successor, action)
            child.evaluated = True
            if child.v <= 0.0:
                stats.pruned_zero_value += 1
                continue
        return leaf.add_child(child)

    if leaf.children:
        return None
    if leaf.parent is None and config.pruning_enabled:
        fallback = _fallback_child(leaf, domain)
        if fallback is not None:
            logger.debug("Every root action was pruned, keeping %s", fallback.action)
            return leaf.add_child(fallback)
    raise NoFeasibleAction(repr(leaf))


def _fallback_child(root: TreeNode, domain: SearchDomain) -> Optional[TreeNode]:
    """Highest-ranked successor of the root over every action the dynamics accept."""
    best, best_rank = None, -math.inf
    for action in domain.actions(root.world):
        try:
            successor = domain.step(root.world, action)
        except InfeasibleAction:
            continue
        rank = domain.fallback_rank(successor, action)
        if best is None or rank > best_rank:
            best, best_rank = TreeNode(successor, action), rank
    return best


def simulate(node: TreeNode, domain: SearchDomain) -> float:
    """Evaluate the node's state once (no random rollout) and store it as ``v``."""
    if not node.evaluated:
        node.v = domain.evaluate(node.world, node.action)
        node.evaluated = True
    if domain.is_terminal(node.world):
        node.terminal = True
        node.goal = domain.is_goal(node.world)
    return node.v


def backpropagate(leaf: TreeNode, v: float, gamma: float, c: float = math.sqrt(2.0)) -> None:
    """
    Add ``gamma**t * v`` to U and one visit to every node on the path from
    ``leaf`` (t = 0) to the root, then refresh the cached UCB of the path
    nodes and their siblings.
    """
    leaf.own_visits += 1
    path = []
    node, t = leaf, 0
    while node is not None:
        node.U += gamma ** t * v
        node.m += 1
        path.append(node)
        node, t = node.parent, t + 1
    for node in path:
        parent = node.parent
        if parent is None:
            continue
        for sibling in parent.children:
            sibling.ucb = ucb_value(sibling.mean_U, parent.m, sibling.m, c)


def _close_upward(node: Optional[TreeNode]) -> None:
    # goal terminals never close
    while node is not None and not node.closed:
        if node.terminal:
            exhausted = not node.goal
        else:
            exhausted = node.is_fully_expanded() and all(child.closed for child in node.children)
        if not exhausted:
            return
        node.closed = True
        node = node.parent


def best_root_action(root: TreeNode, rule: DecisionRule = DecisionRule.ACCUMULATED):
    """
    Action of the root child with the largest accumulated profit U
    (or mean U with ``DecisionRule.MEAN``); the first child wins ties.
    Placeholders of infeasible actions only count when nothing else was
    expanded.

    Raises:
        EmptyTree: If the root has no children
    """
    if not root.children:
        raise EmptyTree("no child of the root was expanded")
    if rule is DecisionRule.MEAN:
        key: Callable[[TreeNode], float] = lambda n: n.mean_U
    else:
        key = lambda n: n.U
    candidates = [child for child in root.children if not child.infeasible] or root.children
    best = candidates[0]
    for child in candidates[1:]:
        if key(child) > key(best):
            best = child
    return best.action


def log_tree(root: TreeNode, level: int = logging.ERROR) -> None:
    for node in root.iter_nodes():
        logger.log(level, "%s%r", "  " * (node.depth - root.depth), node)


def check_tree_invariants(root: TreeNode, tol: float = 1e-9) -> None:
    """Verify visit conservation, U bounds and tree shape for every node.

    The whole tree is logged before an InvariantViolation is raised.
    """
    dump = partial(log_tree, root)
    assert_invariant(lambda: root.parent is None and root.depth == 0 and root.action is None,
                     "root must have depth 0 and no action", dump)
    for node in root.iter_nodes():
        assert_invariant(lambda: -tol <= node.U <= node.m + tol,
                         f"U out of [0, m] at {node!r}", dump)
        assert_invariant(lambda: node.m == sum(c.m for c in node.children) + node.own_visits,
                         f"visit count not conserved at {node!r}", dump)
        for child in node.children:
            assert_invariant(lambda: child.parent is node and child.depth == node.depth + 1,
                             f"broken parent link at {child!r}", dump)


def tree_summary(root: TreeNode) -> Dict[str, Any]:
    """Node count, depth histogram and number of zero-profit nodes below ``root``."""
    depths = np.bincount([n.depth - root.depth for n in root.iter_nodes()])
    zero_value = sum(1 for n in root.iter_nodes() if n is not root and n.evaluated and n.v <= 0.0)
    return {
        "node_count": int(depths.sum()),
        "max_depth": len(depths) - 1,
        "depth_histogram": depths.tolist(),
        "zero_value_nodes": zero_value,
    }


def _fill_stats(stats: SearchStats, root: TreeNode, domain: SearchDomain) -> None:
    summary = tree_summary(root)
    stats.node_count = summary["node_count"]
    stats.max_depth = summary["max_depth"]
    stats.depth_histogram = summary["depth_histogram"]
    stats.zero_value_nodes = summary["zero_value_nodes"]
    stats.root_children = [
        dict(action=getattr(child.action, "value", child.action), U=child.U, m=child.m, v=child.v,
             **domain.describe(child))
        for child in root.children
    ]


def search(
    domain: SearchDomain,
    state,
    config: SearchConfig,
    rng: Optional[np.random.Generator] = None,
    clock: Callable[[], float] = time.perf_counter,
) -> SearchResult:
    """
    Run the anytime loop from ``state`` until the budget is spent.

    The node cap counts the root. The wall-time limit is only checked once
    the root has a child, so any budget yields a decision unless the root
    itself cannot be expanded. Revisiting goal terminals does not grow the
    tree, so the loop also stops after ``ITERATIONS_PER_NODE`` passes per
    node of the cap.

    Raises:
        EmptyTree: If no child of the root could be expanded
    """
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    budget = config.budget
    c, gamma = config.exploration_c, config.gamma
    stats = SearchStats()

    root = TreeNode(state)
    root.v = domain.evaluate(state, None)
    root.evaluated = True
    node_count = 1
    passes, max_passes = 0, budget.max_nodes * ITERATIONS_PER_NODE
    start = clock()

    while node_count < budget.max_nodes and not root.closed and passes < max_passes:
        if (budget.max_wall_time is not None and root.children
                and clock() - start >= budget.max_wall_time):
            break
        passes += 1
        leaf = select_leaf(root, c, skip_closed=config.pruning_enabled)
        try:
            child = expand(leaf, config, rng, domain, stats)
        except TerminalLeaf:
            if not leaf.terminal:
                leaf.terminal = True
                leaf.goal = domain.is_goal(leaf.world)
            backpropagate(leaf, leaf.v, gamma, c)
            _close_upward(leaf)
            stats.iterations += 1
            continue
        except NoFeasibleAction:
            leaf.terminal = True
            backpropagate(leaf, 0.0, gamma, c)
            _close_upward(leaf)
            stats.iterations += 1
            continue
        if child is None:
            _close_upward(leaf)
            continue
        node_count += 1
        value = simulate(child, domain)
        backpropagate(child, value, gamma, c)
        _close_upward(child)
        stats.iterations += 1

    stats.elapsed_s = clock() - start
    _fill_stats(stats, root, domain)
    action = best_root_action(root, config.decision_rule)
    logger.debug("Search done: %d iterations, %d nodes, depth %d, action %s",
                 stats.iterations, stats.node_count, stats.max_depth, action)
    return SearchResult(action=action, stats=stats, root=root)


def deterministic_budget(config: SearchConfig) -> SearchConfig:
    """Drop the wall-time limit when CORMCTS_DETERMINISTIC=1 is set."""
    if os.environ.get(DETERMINISTIC_ENV) == "1" and config.budget.max_wall_time is not None:
        return replace(config, budget=replace(config.budget, max_wall_time=None))
    return config


def planner_label(config: SearchConfig) -> str:
    return "cormcts" if config.pruning_enabled else "cormcts_nopruning"


def _not_terminal(world, network, *args, **kwargs) -> bool:
    return mission_status(world, network) is MissionStatus.IN_PROGRESS


@require(_not_terminal, "plan needs a world whose mission is still in progress")
def plan(
    world: WorldState,
    network: RoadNetwork,
    config: SearchConfig,
    weights: UtilityWeights,
    params: DynamicsParams,
    model: OtherVehicleModel = OtherVehicleModel.CONSTANT_SPEED,
    rng: Optional[np.random.Generator] = None,
    metrics: Optional[MetricsCollector] = None,
) -> Tuple[ManeuverAction, SearchStats]:
    """
    Choose the next ego maneuver with tree search.

    Args:
        world: Current world, not terminal
        network: Road network and mission
        config: Search configuration (budget, constants, pruning, decision rule)
        weights: Profit weights
        params: Dynamics parameters; ``action_duration_s`` is the edge length
        model: Motion model of the interacting vehicles
        rng: Generator driving expansion; defaults to one seeded with ``config.rng_seed``
        metrics: Optional custom metrics collector instance

    Returns:
        The chosen action and the search statistics

    Raises:
        EmptyTree: If no child of the root could be expanded
    """
    metrics = metrics or default_metrics
    config = deterministic_budget(config)
    label = planner_label(config)
    domain = DrivingDomain(network, weights, params, model)

    result = observe(label, metrics)(search)(domain, world, config, rng)

    stats = result.stats
    metrics.search_iterations.labels(label).inc(stats.iterations)
    metrics.tree_nodes.labels(label).set(stats.node_count)
    metrics.pruned_actions.labels("infeasible").inc(stats.pruned_infeasible)
    metrics.pruned_actions.labels("zero_value").inc(stats.pruned_zero_value)
    return result.action, stats
