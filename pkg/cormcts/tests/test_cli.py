"""Tests for the command line interface."""
import argparse
import json

import pytest

from cormcts.cli import EXIT_ERROR, EXIT_FAILURE, EXIT_SUCCESS, main, parse_seeds
from cormcts.world import ScenarioConfig, dump_scenario

from .conftest import other, two_lanes, world


@pytest.fixture
def scenario_dir(tmp_path):
    folder = tmp_path / "scenarios"
    folder.mkdir()
    dump_scenario(ScenarioConfig(network=two_lanes(), initial=world(s_m=290.0), duration_s=10.0,
                                 name="almost_there"), str(folder / "almost_there.json"))
    return folder


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("4,7") == [4, 7]
    assert parse_seeds("5") == [5]
    with pytest.raises(argparse.ArgumentTypeError):
        parse_seeds("3..1")


def test_run_success(scenario_dir, tmp_path):
    trace_path = tmp_path / "trace.jsonl"
    code = main(["run", "--scenario", str(scenario_dir / "almost_there.json"), "--planner", "fixed",
                 "--trace-out", str(trace_path), "--no-timing"])

    assert code == EXIT_SUCCESS
    lines = trace_path.read_text().splitlines()
    assert json.loads(lines[-1])["summary"]["outcome"] == "success"


def test_run_failure_exit_code(tmp_path):
    # the leader stands still two metres ahead: any action ends in a collision
    path = tmp_path / "blocked.json"
    dump_scenario(ScenarioConfig(network=two_lanes(), initial=world(lane=0, s_m=0.0, speed_mps=12.0,
                                                                    others=[other(s_m=6.0, speed_mps=0.0),
                                                                            other(2, lane=1, s_m=6.0,
                                                                                  speed_mps=0.0)]),
                                 duration_s=10.0, name="blocked"), str(path))

    assert main(["run", "--scenario", str(path), "--planner", "fixed"]) == EXIT_FAILURE


def test_run_invalid_scenario(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"network": []}))

    assert main(["run", "--scenario", str(path)]) == EXIT_ERROR
    assert "mission: missing" in capsys.readouterr().err


def test_run_node_cap_flags(scenario_dir, tmp_path):
    trace_path = tmp_path / "trace.jsonl"
    code = main(["run", "--scenario", str(scenario_dir / "almost_there.json"), "--max-nodes", "8",
                 "--seed", "3", "--decision-rule", "mean", "--trace-out", str(trace_path)])

    assert code in (EXIT_SUCCESS, EXIT_ERROR)
    header = json.loads(trace_path.read_text().splitlines()[0])
    assert header["seed"] == 3


def test_batch(scenario_dir, tmp_path):
    report_path = tmp_path / "report.json"
    csv_path = tmp_path / "runtimes.csv"
    code = main(["batch", "--scenarios", str(scenario_dir), "--planners", "fixed", "--seeds", "0..2",
                 "--report-out", str(report_path), "--runtimes-out", str(csv_path),
                 "--store", "file", "--store-path", str(tmp_path / "cells.json")])

    assert code == EXIT_SUCCESS
    report = json.loads(report_path.read_text())
    assert report["planners"]["fixed"]["success_rate"] == 1.0
    assert len(report["cells"]) == 3
    assert csv_path.exists()


def test_batch_without_scenarios(tmp_path):
    code = main(["batch", "--scenarios", str(tmp_path), "--report-out", str(tmp_path / "r.json")])

    assert code == EXIT_ERROR


def test_run_mistyped_override(scenario_dir, tmp_path, capsys):
    raw = json.loads((scenario_dir / "almost_there.json").read_text())
    raw["search"] = {"gamma": "0.9"}
    path = tmp_path / "mistyped.json"
    path.write_text(json.dumps(raw))

    assert main(["run", "--scenario", str(path)]) == EXIT_ERROR
    assert "search.gamma" in capsys.readouterr().err


def test_run_non_utf8_scenario(tmp_path):
    path = tmp_path / "latin1.json"
    path.write_bytes(b'{"name": "caf\xe9"}')

    assert main(["run", "--scenario", str(path)]) == EXIT_ERROR
