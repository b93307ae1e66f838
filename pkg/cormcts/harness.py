"""
Closed-loop scenario runner, trace export and batch statistics.

A run replans every ``replan_period_s`` from the current world, holds the
chosen maneuver for one period (sub-stepped by the dynamics) and records one
tick per period until the mission succeeds, fails or the scenario duration
is spent.
"""
import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .baseline import plan_fixed
from .config import with_overrides
from .dynamics import ManeuverAction, advance
from .errors import CormctsError
from .mcts import deterministic_budget, plan
from .metrics import MetricsCollector, default_metrics
from .store import ResultStore
from .world import MissionStatus, ScenarioConfig, VehicleState, WorldState, mission_status

logger = logging.getLogger(__name__)

PLANNERS = ("cormcts", "cormcts_nopruning", "fixed")


class Outcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"
    ERROR = "error"


_OUTCOME_OF_STATUS = {
    MissionStatus.SUCCESS: Outcome.SUCCESS,
    MissionStatus.FAILURE: Outcome.FAILURE,
    MissionStatus.IN_PROGRESS: Outcome.TIMEOUT,
}


def vehicle_to_dict(vehicle: VehicleState) -> Dict[str, Any]:
    return {
        "id": vehicle.id,
        "lane": vehicle.lane,
        "s_m": vehicle.s_m,
        "speed_mps": vehicle.speed_mps,
        "accel_mps2": vehicle.accel_mps2,
        "lateral_progress": vehicle.lateral_progress,
        "lane_change_target": vehicle.lane_change_target,
    }


def world_to_dict(world: WorldState) -> Dict[str, Any]:
    return {
        "time_s": world.time_s,
        "ego": vehicle_to_dict(world.ego),
        "others": [vehicle_to_dict(o) for o in world.others],
    }


@dataclass
class TickRecord:
    """One replanning step: the chosen action and the world one period later."""
    index: int
    world: WorldState
    action: ManeuverAction
    details: Dict[str, Any]
    planner_ms: float
    status: MissionStatus

    @property
    def time_s(self) -> float:
        return self.world.time_s

    def as_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        details = dict(self.details)
        if not include_timing:
            details.pop("elapsed_ms", None)
        data = {
            "tick": self.index,
            **world_to_dict(self.world),
            "action": self.action.value,
            "planner": details,
            "mission_status": self.status.value,
        }
        if include_timing:
            data["planner_ms"] = self.planner_ms
        return data


@dataclass
class RunTrace:
    scenario: str
    planner: str
    seed: int
    initial: WorldState
    ticks: List[TickRecord] = field(default_factory=list)
    outcome: Outcome = Outcome.TIMEOUT
    error: Optional[Dict[str, Any]] = None

    @property
    def planner_ms(self) -> List[float]:
        return [t.planner_ms for t in self.ticks]

    @property
    def final_world(self) -> WorldState:
        return self.ticks[-1].world if self.ticks else self.initial

    def runtime_summary(self) -> Dict[str, float]:
        if not self.ticks:
            return {}
        runtimes = np.asarray(self.planner_ms)
        return {
            "min_ms": float(runtimes.min()),
            "median_ms": float(np.median(runtimes)),
            "max_ms": float(runtimes.max()),
        }

    def summary(self, include_timing: bool = True) -> Dict[str, Any]:
        data = {
            "scenario": self.scenario,
            "planner": self.planner,
            "seed": self.seed,
            "outcome": self.outcome.value,
            "ticks": len(self.ticks),
            "error": self.error,
        }
        if include_timing:
            data["runtime"] = self.runtime_summary()
            data["planner_ms"] = self.planner_ms
        return data

    def to_jsonl(self, include_timing: bool = True) -> str:
        """
        Line-delimited JSON: a header with the initial world, one line per
        tick and a closing summary line. Without timing the output depends
        only on the scenario, the planner and the seed.
        """
        lines = [json.dumps({"scenario": self.scenario, "planner": self.planner, "seed": self.seed,
                             "initial": world_to_dict(self.initial)}, sort_keys=True)]
        lines.extend(json.dumps(t.as_dict(include_timing), sort_keys=True) for t in self.ticks)
        lines.append(json.dumps({"summary": self.summary(include_timing)}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path: str, include_timing: bool = True) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_jsonl(include_timing))


def _search_overrides(planner: str, seed: Optional[int]) -> Dict[str, Any]:
    search: Dict[str, Any] = {}
    if planner == "cormcts_nopruning":
        search["pruning_enabled"] = False
    if seed is not None:
        search["rng_seed"] = seed
    return search


def prepare_config(
    config: ScenarioConfig,
    planner: str,
    overrides: Optional[Mapping[str, Any]] = None,
    seed: Optional[int] = None,
) -> ScenarioConfig:
    """Apply the planner variant, the run seed and user overrides to ``config``."""
    if planner not in PLANNERS:
        raise ValueError(f"Unsupported planner: {planner}")
    config = with_overrides(config, overrides, "overrides")
    config = with_overrides(config, {"search": _search_overrides(planner, seed)}, "overrides")
    if seed is not None:
        config = replace(config, rng_seed=seed)
    return replace(config, search=deterministic_budget(config.search))


def _plan_once(config: ScenarioConfig, planner: str, world: WorldState, rng, metrics):
    if planner == "fixed":
        action, scores, breakdowns = plan_fixed(
            world, config.network, config.fixed_horizon, config.weights, config.dynamics,
            config.other_vehicle_model, metrics)
        details = {
            "values": {a.value: v for a, v in scores.items()},
            "profit": {a.value: b.as_dict() for a, b in breakdowns.items()},
        }
        return action, details
    action, stats = plan(world, config.network, config.search, config.weights, config.dynamics,
                         config.other_vehicle_model, rng, metrics)
    return action, stats.as_dict()


def run_scenario(
    config: ScenarioConfig,
    planner: str = "cormcts",
    overrides: Optional[Mapping[str, Any]] = None,
    seed: Optional[int] = None,
    metrics: Optional[MetricsCollector] = None,
) -> RunTrace:
    """
    Run one closed-loop simulation.

    Args:
        config: Validated scenario
        planner: One of ``cormcts``, ``cormcts_nopruning`` or ``fixed``
        overrides: Nested mapping of ScenarioConfig fields (e.g. ``{"search": {...}}``)
        seed: Seed of the search generator; defaults to the scenario seed
        metrics: Optional custom metrics collector instance

    Returns:
        The trace; planner errors end the run with outcome ``error`` and a
        diagnostic record instead of raising
    """
    metrics = metrics or default_metrics
    config = prepare_config(config, planner, overrides, seed)
    network = config.network
    period = config.replan_period_s
    n_ticks = int(np.ceil(config.duration_s / period - 1e-9))
    rng = np.random.default_rng(config.search.rng_seed)

    trace = RunTrace(scenario=config.name, planner=planner, seed=config.search.rng_seed,
                     initial=config.initial)
    world = config.initial
    status = mission_status(world, network)
    logger.info("Running %s with planner %s (seed %d)", config.name, planner, trace.seed)

    for index in range(n_ticks):
        if status is not MissionStatus.IN_PROGRESS:
            break
        try:
            start = time.perf_counter()
            action, details = _plan_once(config, planner, world, rng, metrics)
            planner_ms = (time.perf_counter() - start) * 1000.0
            world = advance(world, network, action, config.dynamics, period, config.other_vehicle_model)
        except CormctsError as e:
            logger.exception(f"Run {config.name}/{planner} aborted at tick {index}: {e}")
            trace.error = {"tick": index, "time_s": world.time_s, "type": type(e).__name__,
                           "message": str(e)}
            trace.outcome = Outcome.ERROR
            break
        world = replace(world, time_s=(index + 1) * period)
        status = mission_status(world, network)
        trace.ticks.append(TickRecord(index, world, action, details, planner_ms, status))

    if trace.outcome is not Outcome.ERROR:
        trace.outcome = _OUTCOME_OF_STATUS[status]
    metrics.run_outcomes.labels(planner, trace.outcome.value).inc()
    logger.info("Run %s/%s seed %d finished: %s after %d ticks",
                config.name, planner, trace.seed, trace.outcome.value, len(trace.ticks))
    return trace


def replay_trace(config: ScenarioConfig, trace: RunTrace) -> List[WorldState]:
    """Recompute the world after every tick from the actions recorded in ``trace``."""
    worlds = []
    world = config.initial
    for index, tick in enumerate(trace.ticks):
        world = advance(world, config.network, tick.action, config.dynamics,
                        config.replan_period_s, config.other_vehicle_model)
        world = replace(world, time_s=(index + 1) * config.replan_period_s)
        worlds.append(world)
    return worlds


@dataclass(frozen=True)
class CellResult:
    """Outcome and planner runtimes of one (scenario, planner, seed) run."""
    scenario: str
    planner: str
    seed: int
    outcome: Outcome
    ticks: int
    planner_ms: Tuple[float, ...]

    @property
    def key(self) -> str:
        return f"{self.scenario}/{self.planner}/{self.seed}"

    def as_dict(self) -> Dict[str, Any]:
        return {"scenario": self.scenario, "planner": self.planner, "seed": self.seed,
                "outcome": self.outcome.value, "ticks": self.ticks,
                "planner_ms": list(self.planner_ms)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CellResult":
        return cls(scenario=data["scenario"], planner=data["planner"], seed=int(data["seed"]),
                   outcome=Outcome(data["outcome"]), ticks=int(data["ticks"]),
                   planner_ms=tuple(data["planner_ms"]))

    @classmethod
    def from_trace(cls, trace: RunTrace) -> "CellResult":
        return cls(trace.scenario, trace.planner, trace.seed, trace.outcome,
                   len(trace.ticks), tuple(trace.planner_ms))


@dataclass
class BatchReport:
    cells: List[CellResult]

    def __post_init__(self):
        self.cells = sorted(self.cells, key=lambda c: (c.scenario, c.planner, c.seed))

    @property
    def planners(self) -> List[str]:
        return sorted({c.planner for c in self.cells})

    def success_rate(self, planner: str, scenario: Optional[str] = None) -> float:
        cells = [c for c in self.cells
                 if c.planner == planner and (scenario is None or c.scenario == scenario)]
        if not cells:
            return 0.0
        return sum(c.outcome is Outcome.SUCCESS for c in cells) / len(cells)

    def runtimes(self, planner: str) -> np.ndarray:
        return np.asarray([ms for c in self.cells if c.planner == planner for ms in c.planner_ms])

    def runtime_summary(self, planner: str) -> Dict[str, float]:
        """Median and quantiles over every planner call of ``planner``."""
        runtimes = self.runtimes(planner)
        if runtimes.size == 0:
            return {"count": 0}
        q05, q25, q50, q75, q95 = np.quantile(runtimes, [0.05, 0.25, 0.5, 0.75, 0.95])
        return {"count": int(runtimes.size), "min_ms": float(runtimes.min()), "q05_ms": float(q05),
                "q25_ms": float(q25), "median_ms": float(q50), "q75_ms": float(q75),
                "q95_ms": float(q95), "max_ms": float(runtimes.max())}

    def outcome_matrix(self) -> Dict[str, Dict[str, Dict[str, int]]]:
        """Outcome counts per scenario and planner."""
        matrix: Dict[str, Dict[str, Dict[str, int]]] = {}
        for c in self.cells:
            counts = matrix.setdefault(c.scenario, {}).setdefault(
                c.planner, {o.value: 0 for o in Outcome})
            counts[c.outcome.value] += 1
        return matrix

    @property
    def any_failure(self) -> bool:
        return any(c.outcome is Outcome.FAILURE for c in self.cells)

    @property
    def any_error(self) -> bool:
        return any(c.outcome is Outcome.ERROR for c in self.cells)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "planners": {
                p: {"success_rate": self.success_rate(p), "runtime": self.runtime_summary(p)}
                for p in self.planners
            },
            "outcomes": self.outcome_matrix(),
            "cells": [c.as_dict() for c in self.cells],
        }

    def write_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def write_runtime_csv(self, path: str) -> None:
        """One row per planner call, for external plotting."""
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["scenario", "planner", "seed", "call", "planner_ms"])
            for c in self.cells:
                for call, ms in enumerate(c.planner_ms):
                    writer.writerow([c.scenario, c.planner, c.seed, call, ms])


def _run_cell(config: ScenarioConfig, planner: str, seed: int,
              overrides: Optional[Mapping[str, Any]]) -> CellResult:
    return CellResult.from_trace(run_scenario(config, planner, overrides, seed))


def run_batch(
    scenarios: Sequence[ScenarioConfig],
    planners: Sequence[str],
    seeds: Iterable[int],
    overrides: Optional[Mapping[str, Any]] = None,
    store: Optional[ResultStore] = None,
    workers: int = 1,
) -> BatchReport:
    """
    Run every (scenario, planner, seed) triple and aggregate the results.

    Args:
        scenarios: Non-empty list of scenarios
        planners: Non-empty list of planner variants
        seeds: Search seeds
        overrides: Overrides applied to every run
        store: Optional result store; cells already present are not re-run
        workers: Number of worker processes (1 runs in-process)

    Returns:
        The aggregated report; failed runs are recorded, never raised
    """
    seeds = list(seeds)
    if not scenarios or not planners or not seeds:
        raise ValueError("run_batch needs at least one scenario, planner and seed")
    for planner in planners:
        if planner not in PLANNERS:
            raise ValueError(f"Unsupported planner: {planner}")

    cells: List[CellResult] = []
    pending: List[Tuple[ScenarioConfig, str, int]] = []
    for config in scenarios:
        for planner in planners:
            for seed in seeds:
                key = f"{config.name}/{planner}/{seed}"
                cached = store.get(key) if store is not None else None
                if cached is not None:
                    cells.append(CellResult.from_dict(cached))
                else:
                    pending.append((config, planner, seed))
    logger.info("Batch: %d cells cached, %d to run", len(cells), len(pending))

    def _record(cell: CellResult) -> None:
        cells.append(cell)
        if store is not None:
            store.set(cell.key, cell.as_dict())

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, c, p, s, overrides) for c, p, s in pending]
            for future in futures:
                _record(future.result())
    else:
        for config, planner, seed in pending:
            _record(_run_cell(config, planner, seed, overrides))

    return BatchReport(cells)
