"""
Prometheus metrics for planner calls, searches and closed-loop runs.
"""
import logging
import time
from functools import wraps
from typing import Optional

from prometheus_client import REGISTRY, CollectorRegistry, Counter, Gauge, Histogram

logger = logging.getLogger(__name__)

# planner calls are expected between a few ms and the 1 s anytime budget
_PLAN_BUCKETS = (0.005, 0.01, 0.025, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0)


class MetricsCollector:
    """Collects and exports planner metrics."""

    def __init__(self, namespace: str = "cormcts", registry: Optional[CollectorRegistry] = None):
        self.namespace = namespace
        registry = registry or REGISTRY
        self.registry = registry

        self.plan_duration = Histogram(
            f"{namespace}_plan_duration_seconds",
            "Wall time of one planner call in seconds",
            ["planner"],
            buckets=_PLAN_BUCKETS,
            registry=registry,
        )
        self.search_iterations = Counter(
            f"{namespace}_search_iterations_total",
            "Total number of search iterations",
            ["planner"],
            registry=registry,
        )
        self.tree_nodes = Gauge(
            f"{namespace}_tree_nodes",
            "Node count of the last search tree",
            ["planner"],
            registry=registry,
        )
        self.pruned_actions = Counter(
            f"{namespace}_pruned_actions_total",
            "Actions excluded from expansion",
            ["reason"],
            registry=registry,
        )
        self.run_outcomes = Counter(
            f"{namespace}_run_outcomes_total",
            "Closed-loop run outcomes",
            ["planner", "outcome"],
            registry=registry,
        )
        self.store_operations = Counter(
            f"{namespace}_store_operations_total",
            "Total number of result store operations",
            ["operation", "backend"],
            registry=registry,
        )


class ObservabilityDecorator:
    """Times a planner function into the plan duration histogram."""

    def __init__(self, metrics: MetricsCollector, planner: Optional[str] = None):
        self.metrics = metrics
        self.planner = planner

    def __call__(self, func):
        planner = self.planner or func.__name__

        @wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.perf_counter()
            try:
                with self.metrics.plan_duration.labels(planner).time():
                    return func(*args, **kwargs)
            except Exception as e:
                logger.exception(f"Planner {planner} failed with error: {str(e)}")
                raise
            finally:
                duration = time.perf_counter() - start_time
                logger.debug(f"Planner {planner} took {duration * 1000:.2f} ms")

        return wrapper


default_metrics = MetricsCollector()


def observe(
    planner: Optional[str] = None,
    metrics: Optional[MetricsCollector] = None
):
    """
    Decorator recording the duration of planner calls.

    Args:
        planner: Label for the planner in metrics (defaults to the function name)
        metrics: Optional custom metrics collector instance
    """
    return ObservabilityDecorator(metrics or default_metrics, planner)
