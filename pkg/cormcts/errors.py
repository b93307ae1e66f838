"""
Exception hierarchy shared by every cormcts module.
"""
from typing import Optional


class CormctsError(Exception):
    """Base class for all planner and scenario errors."""
    pass


class ParseError(CormctsError):
    """Raised when a scenario file is not well-formed JSON."""
    pass


class ValidationError(CormctsError):
    """Raised when a value violates a type invariant.

    Args:
        path: Dotted location of the offending field (e.g. ``network[1].ends_at_m``)
        message: Human readable description of the violation
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class InfeasibleAction(CormctsError):
    """Raised by the dynamics when an action cannot be performed from a state."""

    def __init__(self, action, reason: Optional[str] = None):
        self.action = action
        self.reason = reason or "infeasible"
        super().__init__(f"{getattr(action, 'value', action)}: {self.reason}")


class TerminalLeaf(CormctsError):
    """Raised by expansion when the selected leaf is already terminal."""
    pass


class NoFeasibleAction(CormctsError):
    """Raised when every action has been excluded from a state."""
    pass


class EmptyTree(CormctsError):
    """Raised when a decision is requested from a root without children."""
    pass
