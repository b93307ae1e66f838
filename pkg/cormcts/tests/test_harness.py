"""Tests for the closed-loop harness and batch statistics."""
import csv
import json

import fakeredis
import pytest

from cormcts import (
    EmptyTree,
    ManeuverAction,
    MissionStatus,
    Outcome,
    ResultStore,
    load_scenario,
    replay_trace,
    run_batch,
    run_scenario,
)
from cormcts.config import SearchBudget, SearchConfig
from cormcts.dynamics import is_feasible
from cormcts.harness import BatchReport, CellResult, prepare_config
from cormcts.world import ScenarioConfig, bundled_scenario_path

from .conftest import two_lanes, world

SHORT = {"duration_s": 6.0, "search": {"budget": {"max_wall_time": None, "max_nodes": 12}}}
FAST_SEARCH = SearchConfig(budget=SearchBudget(max_wall_time=None, max_nodes=12))


@pytest.fixture
def scenario1():
    return load_scenario(bundled_scenario_path("scenario1_end_of_lane"))


@pytest.fixture
def scenario2():
    return load_scenario(bundled_scenario_path("scenario2_exit_ramp"))


@pytest.fixture
def almost_there():
    return ScenarioConfig(network=two_lanes(), initial=world(s_m=290.0), duration_s=10.0,
                          name="almost_there", search=FAST_SEARCH)


def test_identical_runs_give_identical_traces(scenario1, metrics):
    first = run_scenario(scenario1, "cormcts", SHORT, seed=5, metrics=metrics)
    second = run_scenario(scenario1, "cormcts", SHORT, seed=5, metrics=metrics)

    assert first.to_jsonl(include_timing=False) == second.to_jsonl(include_timing=False)


def test_ticks_follow_replan_period(scenario1, metrics):
    trace = run_scenario(scenario1, "cormcts", SHORT, metrics=metrics)

    assert [t.time_s for t in trace.ticks] == pytest.approx([2.0, 4.0, 6.0][:len(trace.ticks)])
    assert trace.ticks


def test_outcome_matches_last_status(scenario1, metrics):
    trace = run_scenario(scenario1, "fixed", SHORT, metrics=metrics)

    assert trace.outcome is Outcome.TIMEOUT
    assert trace.ticks[-1].status is MissionStatus.IN_PROGRESS
    assert metrics.registry.get_sample_value(
        "test_run_outcomes_total", {"planner": "fixed", "outcome": "timeout"}) == 1


def test_recorded_actions_were_feasible(scenario2, metrics):
    trace = run_scenario(scenario2, "cormcts", SHORT, metrics=metrics)

    states = [trace.initial] + [t.world for t in trace.ticks[:-1]]
    for state, tick in zip(states, trace.ticks):
        assert is_feasible(state, scenario2.network, tick.action)


def test_replay_reproduces_trace(scenario1, metrics):
    trace = run_scenario(scenario1, "cormcts", SHORT, seed=3, metrics=metrics)

    for replayed, tick in zip(replay_trace(scenario1, trace), trace.ticks):
        assert replayed.ego.lane == tick.world.ego.lane
        assert replayed.ego.s_m == pytest.approx(tick.world.ego.s_m, abs=1e-9)
        assert [o.s_m for o in replayed.others] == pytest.approx([o.s_m for o in tick.world.others], abs=1e-9)


def test_success_stops_the_run(almost_there, metrics):
    trace = run_scenario(almost_there, "fixed", metrics=metrics)

    assert trace.outcome is Outcome.SUCCESS
    assert len(trace.ticks) == 1
    assert trace.final_world.ego.s_m == 300.0


def test_planner_error_is_recorded(mocker, scenario1, metrics):
    mocker.patch("cormcts.harness.plan", side_effect=EmptyTree("no child"))

    trace = run_scenario(scenario1, "cormcts", SHORT, metrics=metrics)

    assert trace.outcome is Outcome.ERROR
    assert trace.ticks == []
    assert trace.error["type"] == "EmptyTree"
    assert trace.error["tick"] == 0


def test_unknown_planner(scenario1):
    with pytest.raises(ValueError, match="Unsupported planner"):
        run_scenario(scenario1, "random")


def test_variant_and_seed_applied(scenario1):
    config = prepare_config(scenario1, "cormcts_nopruning", SHORT, seed=9)

    assert not config.search.pruning_enabled
    assert config.search.rng_seed == 9
    assert config.duration_s == 6.0


def test_trace_jsonl_layout(scenario1, metrics, tmp_path):
    trace = run_scenario(scenario1, "fixed", SHORT, metrics=metrics)
    path = tmp_path / "trace.jsonl"
    trace.write(str(path))

    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == len(trace.ticks) + 2
    assert lines[0]["initial"]["ego"]["s_m"] == 60.0
    assert "values" in lines[1]["planner"]
    assert "planner_ms" in lines[1]
    assert lines[-1]["summary"]["outcome"] == "timeout"

    untimed = [json.loads(line) for line in trace.to_jsonl(include_timing=False).splitlines()]
    assert "planner_ms" not in untimed[1]
    assert "runtime" not in untimed[-1]["summary"]


def test_batch_cardinality(scenario1, scenario2):
    report = run_batch([scenario1, scenario2], ["cormcts", "fixed"], [0, 1], SHORT)

    assert len(report.cells) == 8
    assert report.planners == ["cormcts", "fixed"]
    matrix = report.outcome_matrix()
    assert set(matrix) == {"scenario1_end_of_lane", "scenario2_exit_ramp"}
    assert sum(matrix["scenario1_end_of_lane"]["fixed"].values()) == 2
    for planner in report.planners:
        assert 0.0 <= report.success_rate(planner) <= 1.0
        assert report.runtime_summary(planner)["count"] == len(report.runtimes(planner))


def test_batch_rejects_empty_lists(scenario1):
    with pytest.raises(ValueError):
        run_batch([scenario1], [], [0])


def test_batch_report_outputs(almost_there, tmp_path):
    report = run_batch([almost_there], ["cormcts", "fixed"], [0, 1, 2])
    report.write_json(str(tmp_path / "report.json"))
    report.write_runtime_csv(str(tmp_path / "runtimes.csv"))

    data = json.loads((tmp_path / "report.json").read_text())
    assert data["planners"]["fixed"]["success_rate"] == 1.0
    assert len(data["cells"]) == 6
    with open(tmp_path / "runtimes.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == sum(len(c.planner_ms) for c in report.cells)


def test_report_aggregation_is_order_independent():
    cells = [
        CellResult("a", "fixed", 1, Outcome.SUCCESS, 3, (1.0, 2.0, 3.0)),
        CellResult("a", "fixed", 0, Outcome.FAILURE, 2, (4.0, 5.0)),
    ]
    forward, backward = BatchReport(cells), BatchReport(list(reversed(cells)))

    assert forward.to_dict() == backward.to_dict()
    assert forward.success_rate("fixed") == 0.5
    assert forward.runtime_summary("fixed")["median_ms"] == 3.0
    assert forward.any_failure and not forward.any_error


def test_batch_resumes_from_file_store(mocker, almost_there, tmp_path, metrics):
    store = ResultStore(backend="file", namespace="batch", file_path=str(tmp_path / "cells.json"), metrics=metrics)
    first = run_batch([almost_there], ["fixed"], [0, 1], store=store)

    run = mocker.patch("cormcts.harness.run_scenario")
    second = run_batch([almost_there], ["fixed"], [0, 1], store=store)

    run.assert_not_called()
    assert second.to_dict() == first.to_dict()


def test_batch_resumes_from_redis_store(monkeypatch, mocker, almost_there, metrics):
    client = fakeredis.FakeStrictRedis()
    monkeypatch.setattr("redis.from_url", lambda *args, **kwargs: client)
    store = ResultStore(backend="redis", namespace="batch", metrics=metrics)

    run_batch([almost_there], ["cormcts"], [4], store=store)
    assert client.exists("batch:almost_there/cormcts/4")

    run = mocker.patch("cormcts.harness.run_scenario", wraps=run_scenario)
    report = run_batch([almost_there], ["cormcts"], [4, 5], store=store)
    assert run.call_count == 1
    assert len(report.cells) == 2


@pytest.mark.parametrize("name", ["scenario1_end_of_lane", "scenario2_exit_ramp"])
def test_fixed_horizon_overtakes_and_fails(name, metrics):
    config = load_scenario(bundled_scenario_path(name))
    traces = [run_scenario(config, "fixed", seed=seed, metrics=metrics) for seed in range(20)]

    assert [t.outcome for t in traces] == [Outcome.FAILURE] * 20
    assert all(t.ticks[0].action is ManeuverAction.CHANGE_LANE_LEFT for t in traces)


@pytest.mark.parametrize("name", ["scenario1_end_of_lane", "scenario2_exit_ramp"])
def test_cormcts_completes_mission(name, metrics):
    config = load_scenario(bundled_scenario_path(name))
    outcomes = [run_scenario(config, "cormcts", seed=seed, metrics=metrics).outcome for seed in range(20)]

    assert outcomes.count(Outcome.SUCCESS) >= 18
    assert Outcome.ERROR not in outcomes
