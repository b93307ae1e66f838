"""Tests for the safeguards module."""
import pytest

from cormcts import InvariantViolation, assert_invariant, ensure, require


def test_assert_invariant():
    visits = {'root': 5, 'children': 5}

    assert_invariant(lambda: visits['root'] == visits['children'], "visits not conserved")

    visits['children'] = 4
    with pytest.raises(InvariantViolation, match="visits not conserved"):
        assert_invariant(lambda: visits['root'] == visits['children'], "visits not conserved")


def test_assert_invariant_with_fallback():
    dumped = []

    with pytest.raises(InvariantViolation):
        assert_invariant(lambda: False, "broken tree", fallback=lambda: dumped.append("tree"))

    assert dumped == ["tree"]


def test_require_sees_arguments():
    @require(lambda duration: duration > 0, "duration must be positive")
    def hold(duration):
        return duration * 2

    assert hold(1.5) == 3.0
    with pytest.raises(InvariantViolation, match="duration must be positive"):
        hold(0)


def test_ensure_checks_result():
    @ensure(lambda v: 0.0 <= v <= 1.0, "profit out of range")
    def profit(x):
        return x

    assert profit(0.4) == 0.4
    with pytest.raises(InvariantViolation, match="profit out of range"):
        profit(1.2)


def test_default_messages():
    @require(lambda: False)
    def guarded():
        pass

    with pytest.raises(InvariantViolation, match="Precondition of guarded failed"):
        guarded()
