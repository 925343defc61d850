"""Tests for ordered parallel batch execution."""

import threading
import time

import pytest

from dyson_ring.batch import BatchCancelled, BatchRunner, run_batch
from dyson_ring.exceptions import InfeasibleLegError
from dyson_ring.result import Err, Ok, collect_ok


def square(x):
    return x * x


def slow_reverse_square(x):
    # later items finish first
    time.sleep(0.01 * (5 - x))
    return x * x


def fail_on_odd(x):
    if x % 2:
        raise InfeasibleLegError("odd", target=x)
    return x


class TestBatchRunner:
    """BatchRunner.map."""

    def test_invalid_worker_count(self):
        with pytest.raises(ValueError):
            BatchRunner(workers=0)

    def test_sequential_keeps_order(self):
        results = BatchRunner(workers=1).map(square, [3, 1, 2])
        assert results == [Ok(9), Ok(1), Ok(4)]

    def test_parallel_keeps_input_order(self):
        results = BatchRunner(workers=4).map(slow_reverse_square, range(5))
        assert collect_ok(results) == [0, 1, 4, 9, 16]

    def test_results_independent_of_worker_count(self):
        items = list(range(12))
        one = BatchRunner(workers=1).map(fail_on_odd, items)
        four = BatchRunner(workers=4).map(fail_on_odd, items)
        assert [r.is_ok() for r in one] == [r.is_ok() for r in four]
        assert collect_ok(one) == collect_ok(four)

    def test_domain_errors_become_err(self):
        results = BatchRunner(workers=1).map(fail_on_odd, [0, 1, 2])
        assert results[0] == Ok(0)
        assert isinstance(results[1], Err)
        assert isinstance(results[1].error, InfeasibleLegError)
        assert results[2] == Ok(2)

    def test_unexpected_errors_become_err(self):
        def boom(x):
            raise ZeroDivisionError("bad")

        for workers in (1, 3):
            results = BatchRunner(workers=workers).map(boom, [1, 2])
            assert all(isinstance(r.error, ZeroDivisionError) for r in results)

    def test_empty_batch(self):
        assert BatchRunner(workers=4).map(square, []) == []

    def test_stop_event_skips_items(self):
        stop = threading.Event()
        stop.set()
        results = BatchRunner(workers=1, stop_event=stop).map(square, [1, 2])
        assert all(isinstance(r.error, BatchCancelled) for r in results)
        assert results[1].error.details["index"] == 1

    def test_stop_mid_batch(self):
        stop = threading.Event()

        def work(x):
            if x == 1:
                stop.set()
            return x

        results = BatchRunner(workers=1, stop_event=stop).map(work, [0, 1, 2, 3])
        assert collect_ok(results) == [0, 1]
        assert isinstance(results[2].error, BatchCancelled)

    def test_parallel_stop_event(self):
        stop = threading.Event()
        stop.set()
        results = BatchRunner(workers=3, stop_event=stop).map(square, range(4))
        assert all(r.is_err() for r in results)

    def test_run_batch_helper(self):
        assert collect_ok(run_batch(square, [2, 3], workers=2)) == [4, 9]


class TestBatchRunnerAsync:
    """map_async and map from inside a running event loop."""

    async def test_map_async(self):
        runner = BatchRunner(workers=2)
        results = await runner.map_async(fail_on_odd, [0, 1, 2])
        assert results[0] == Ok(0)
        assert results[1].is_err()
        assert results[2] == Ok(2)

    async def test_map_inside_running_loop(self):
        results = BatchRunner(workers=2).map(square, [1, 2, 3])
        assert collect_ok(results) == [1, 4, 9]
