"""Tests for Result type."""

import pytest

from dyson_ring.exceptions import InfeasibleLegError
from dyson_ring.result import Err, Ok, collect_ok


def test_ok_creation():
    """Test Ok result creation."""
    result = Ok(42)
    assert result.is_ok()
    assert not result.is_err()
    assert result.value == 42


def test_err_creation():
    """Test Err result creation."""
    result = Err("error message")
    assert result.is_err()
    assert not result.is_ok()
    assert result.error == "error message"


def test_ok_unwrap():
    """Test unwrapping Ok result."""
    assert Ok("success").unwrap() == "success"


def test_err_unwrap_raises_runtime_error():
    """Unwrapping a plain Err raises RuntimeError."""
    with pytest.raises(RuntimeError) as exc_info:
        Err("failure").unwrap()
    assert "failure" in str(exc_info.value)


def test_err_unwrap_reraises_exception():
    """Unwrapping an Err holding an exception re-raises that exception."""
    error = InfeasibleLegError("no finite leg", target=7)
    with pytest.raises(InfeasibleLegError) as exc_info:
        Err(error).unwrap()
    assert exc_info.value is error


def test_unwrap_or():
    """Test unwrap_or on both variants."""
    assert Ok(10).unwrap_or(20) == 10
    assert Err("error").unwrap_or(20) == 20


def test_map():
    """map applies only to Ok."""
    assert Ok(5).map(lambda x: x * 2).unwrap() == 10
    mapped = Err("error").map(lambda x: x * 2)
    assert mapped.is_err()
    assert mapped.error == "error"


def test_map_err():
    """map_err applies only to Err."""
    assert Ok(5).map_err(lambda e: f"Error: {e}").unwrap() == 5
    assert Err("failure").map_err(lambda e: f"Error: {e}").error == "Error: failure"


def test_collect_ok_keeps_order():
    """collect_ok drops failures and keeps the order of successes."""
    results = [Ok(3), Err("x"), Ok(1), Err("y"), Ok(2)]
    assert collect_ok(results) == [3, 1, 2]


def test_collect_ok_empty():
    assert collect_ok([]) == []
    assert collect_ok([Err("only failures")]) == []


def test_result_in_batch_loop():
    """Per-item results let a loop continue past failures."""

    def solve(k):
        if k % 2:
            return Err(InfeasibleLegError("odd target", target=k))
        return Ok(k * 10)

    results = [solve(k) for k in range(5)]
    assert collect_ok(results) == [0, 20, 40]
    failed = [r.error.details["target"] for r in results if r.is_err()]
    assert failed == [1, 3]
