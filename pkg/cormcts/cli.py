"""
Command line entry point: ``cormcts run`` and ``cormcts batch``.

Exit codes: 0 when every run succeeds, 2 when a run fails its mission,
1 on errors (invalid scenario, planner error, timeout).
"""
import argparse
import glob
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from prometheus_client import start_http_server

from .errors import CormctsError
from .harness import PLANNERS, Outcome, run_batch, run_scenario
from .store import ResultStore
from .world import load_scenario

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_ERROR = 1
EXIT_FAILURE = 2


def parse_seeds(text: str) -> List[int]:
    """Parse ``a..b`` (inclusive), ``a,b,c`` or a single seed."""
    try:
        if ".." in text:
            low, high = (int(part) for part in text.split("..", 1))
            if high < low:
                raise ValueError
            return list(range(low, high + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed range {text!r}")


def _search_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    search: Dict[str, Any] = {}
    budget: Dict[str, Any] = {}
    if args.budget_ms is not None:
        budget["max_wall_time"] = args.budget_ms / 1000.0
    elif args.max_nodes is not None:
        # node cap only unless a wall-time budget is asked for
        budget["max_wall_time"] = None
    if args.max_nodes is not None:
        budget["max_nodes"] = args.max_nodes
    if budget:
        search["budget"] = budget
    if args.no_pruning:
        search["pruning_enabled"] = False
    if args.decision_rule is not None:
        search["decision_rule"] = args.decision_rule
    return {"search": search} if search else {}


def _add_search_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--budget-ms", type=float, help="wall-time budget per planner call")
    parser.add_argument("--max-nodes", type=int, help="node cap per planner call")
    parser.add_argument("--no-pruning", action="store_true", help="disable action pruning")
    parser.add_argument("--decision-rule", choices=["accumulated", "mean"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cormcts", description="Tactical maneuver planning by tree search")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default: WARNING)")
    parser.add_argument("--metrics-port", type=int, help="expose Prometheus metrics on this port")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one closed-loop scenario")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--planner", choices=["cormcts", "fixed"], default="cormcts")
    run.add_argument("--seed", type=int, help="search seed (default: scenario seed)")
    run.add_argument("--trace-out", help="write the line-delimited JSON trace here")
    run.add_argument("--no-timing", action="store_true", help="omit wall-clock fields from the trace")
    _add_search_flags(run)

    batch = sub.add_parser("batch", help="run scenarios x planners x seeds")
    batch.add_argument("--scenarios", required=True, help="directory of scenario JSON files")
    batch.add_argument("--planners", default="cormcts,fixed",
                       help=f"comma separated subset of {','.join(PLANNERS)}")
    batch.add_argument("--seeds", type=parse_seeds, default=[0], help="seed range a..b")
    batch.add_argument("--report-out", required=True, help="batch report JSON path")
    batch.add_argument("--runtimes-out", help="CSV of every planner call runtime")
    batch.add_argument("--workers", type=int, default=1)
    batch.add_argument("--store", choices=["file", "redis"], help="cache finished cells to resume a batch")
    batch.add_argument("--store-path", help="JSON file of the file store")
    batch.add_argument("--redis-url", default="redis://localhost:6379")
    _add_search_flags(batch)
    return parser


def _exit_code(outcomes: Sequence[Outcome]) -> int:
    if any(o in (Outcome.ERROR, Outcome.TIMEOUT) for o in outcomes):
        return EXIT_ERROR
    if any(o is Outcome.FAILURE for o in outcomes):
        return EXIT_FAILURE
    return EXIT_SUCCESS


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    trace = run_scenario(config, args.planner, _search_overrides(args), args.seed)
    if args.trace_out:
        trace.write(args.trace_out, include_timing=not args.no_timing)
    print(f"{trace.scenario} {trace.planner} seed={trace.seed}: {trace.outcome.value} "
          f"after {len(trace.ticks)} ticks")
    if trace.error:
        print(f"error: {trace.error['type']}: {trace.error['message']}", file=sys.stderr)
    return _exit_code([trace.outcome])


def _cmd_batch(args: argparse.Namespace) -> int:
    paths = sorted(glob.glob(os.path.join(args.scenarios, "*.json")))
    if not paths:
        raise CormctsError(f"no scenario files in {args.scenarios}")
    scenarios = [load_scenario(p) for p in paths]
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]

    store: Optional[ResultStore] = None
    if args.store:
        store = ResultStore(backend=args.store, namespace="batch", redis_url=args.redis_url,
                            file_path=args.store_path)

    report = run_batch(scenarios, planners, args.seeds, _search_overrides(args), store, args.workers)
    report.write_json(args.report_out)
    if args.runtimes_out:
        report.write_runtime_csv(args.runtimes_out)
    for planner in report.planners:
        summary = report.runtime_summary(planner)
        print(f"{planner}: success rate {report.success_rate(planner):.2f}, "
              f"median {summary.get('median_ms', float('nan')):.1f} ms")
    return _exit_code([c.outcome for c in report.cells])


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.metrics_port:
        start_http_server(args.metrics_port)

    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_batch(args)
    except (CormctsError, ValueError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
