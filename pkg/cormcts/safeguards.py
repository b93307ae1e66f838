"""
Runtime contracts guarding planner invariants.
"""
from functools import wraps
from typing import Any, Callable, Optional

from .errors import CormctsError


class InvariantViolation(CormctsError):
    """Raised when a planner or tree invariant is violated."""
    pass


def assert_invariant(
    condition: Callable[[], bool],
    message: Optional[str] = None,
    fallback: Optional[Callable[[], Any]] = None
) -> None:
    """
    Assert that an invariant holds.

    Args:
        condition: Function that returns True if the invariant holds
        message: Error message if it does not
        fallback: Optional hook called before raising (e.g. to dump diagnostics)

    Raises:
        InvariantViolation: If the check fails
    """
    if not condition():
        if fallback:
            fallback()
        raise InvariantViolation(message or "Invariant violated")


def require(
    precondition: Callable[..., bool],
    message: Optional[str] = None
) -> Callable:
    """
    Decorator enforcing a precondition on the call arguments.

    Args:
        precondition: Called with the same arguments as the decorated function
        message: Error message if the precondition fails
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            if not precondition(*args, **kwargs):
                raise InvariantViolation(message or f"Precondition of {func.__name__} failed")
            return func(*args, **kwargs)
        return wrapper
    return decorator


def ensure(
    postcondition: Callable[[Any], bool],
    message: Optional[str] = None
) -> Callable:
    """
    Decorator enforcing a postcondition on the returned value.

    Args:
        postcondition: Takes the result and returns True if it is valid
        message: Error message if the postcondition fails
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            result = func(*args, **kwargs)
            if not postcondition(result):
                raise InvariantViolation(message or f"Postcondition of {func.__name__} failed")
            return result
        return wrapper
    return decorator
