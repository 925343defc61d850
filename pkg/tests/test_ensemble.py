"""Tests for disjoint ensemble selection."""

import pytest

from dyson_ring.constants import DAY
from dyson_ring.ensemble import EnsembleResult, ensemble_select, is_disjoint
from dyson_ring.exceptions import (
    InfeasibleLegError,
    PartialEnsembleError,
    PreconditionError,
)
from dyson_ring.legs import ImpulsiveLeg, LegKind, MothershipTrajectory


def traj(*ids):
    legs = []
    t = 0.0
    for n, a in enumerate(ids):
        kind = LegKind.E2A if n == 0 else LegKind.A2A
        legs.append(ImpulsiveLeg(kind, a, t, 100 * DAY, 0.0, 0.0, 0.5, 0.0))
        t += 100 * DAY
    return MothershipTrajectory(legs)


def drop(t, ast_id):
    return traj(*[a for a in t.asteroid_ids if a != ast_id])


class TestIsDisjoint:
    def test_disjoint(self):
        assert is_disjoint([traj(1, 2), traj(3), traj(4, 5)])

    def test_shared_asteroid(self):
        assert not is_disjoint([traj(1, 2), traj(2, 3)])

    def test_empty(self):
        assert is_disjoint([])


class TestEnsembleSelect:
    """ensemble_select without overlaps."""

    @pytest.fixture
    def pool(self):
        return [traj(2 * k + 1, 2 * k + 2) for k in range(15)]

    def test_selects_requested_size(self, pool):
        scores = [float(k + 1) for k in range(15)]
        result = ensemble_select(pool, 15.0, 0.5, seed=1, j_primes=scores)
        assert isinstance(result, EnsembleResult)
        assert len(result.trajectories) == 10
        assert is_disjoint(result.trajectories)
        assert result.draws >= 10
        assert result.repairs == 0
        assert result.threshold <= 15.0
        assert result.mean_j_prime == pytest.approx(sum(result.j_primes) / 10)

    def test_draws_only_above_threshold(self, pool):
        scores = [float(k + 1) for k in range(15)]
        result = ensemble_select(pool, 15.0, 0.5, j_primes=scores, size=1)
        assert result.j_primes == [15.0]
        assert result.trajectories[0] is pool[14]
        assert result.threshold == pytest.approx(14.5)

    def test_same_seed_same_ensemble(self, pool):
        scores = [1.0] * 15
        a = ensemble_select(pool, 1.0, 0.1, seed=7, j_primes=scores)
        b = ensemble_select(pool, 1.0, 0.1, seed=7, j_primes=scores)
        assert a.asteroid_ids == b.asteroid_ids

    def test_rank_function_scores_pool(self, pool):
        result = ensemble_select(
            pool, 100.0, 10.0, rank=lambda t: float(t.asteroid_ids[0]), size=3
        )
        for t, j in zip(result.trajectories, result.j_primes):
            assert j == float(t.asteroid_ids[0])

    def test_small_pool(self, pool):
        with pytest.raises(PartialEnsembleError) as exc_info:
            ensemble_select(pool[:5], 1.0, 0.1, j_primes=[1.0] * 5)
        assert exc_info.value.achieved == 0

    def test_preconditions(self, pool):
        with pytest.raises(PreconditionError):
            ensemble_select(pool, 1.0, 0.0, j_primes=[1.0] * 15)
        with pytest.raises(PreconditionError):
            ensemble_select(pool, 1.0, 0.1)
        with pytest.raises(PreconditionError):
            ensemble_select(pool, 1.0, 0.1, j_primes=[1.0] * 15, remove=drop)


class TestOverlapRepair:
    """Single-overlap repair by dropping the shared asteroid."""

    def test_overlap_without_repair_exhausts_pool(self):
        pool = [traj(1, 2), traj(1, 3)]
        with pytest.raises(PartialEnsembleError) as exc_info:
            ensemble_select(pool, 1.0, 0.5, j_primes=[1.0, 1.0], size=2, max_blocked=3)
        assert exc_info.value.achieved == 1
        assert len(exc_info.value.selected) == 1

    def test_drop_from_candidate(self):
        pool = [traj(1, 2), traj(2, 3)]
        result = ensemble_select(
            pool,
            10.0,
            1.0,
            rank=lambda t: 5.0 * len(t),
            remove=drop,
            size=2,
            j_primes=[10.0, 9.0],
        )
        assert [t.asteroid_ids for t in result.trajectories] == [[1, 2], [3]]
        assert result.j_primes == [10.0, 5.0]
        assert result.repairs == 1

    def test_drop_from_ensemble_member(self):
        def rank(t):
            return 8.0 if t.asteroid_ids == [1] else 1.0

        pool = [traj(1, 2), traj(2, 3)]
        result = ensemble_select(
            pool, 10.0, 1.0, rank=rank, remove=drop, size=2, j_primes=[10.0, 9.0]
        )
        assert [t.asteroid_ids for t in result.trajectories] == [[1], [2, 3]]
        assert result.j_primes == [8.0, 9.0]
        assert is_disjoint(result.trajectories)

    def test_unrepairable_overlap_exhausts_pool(self):
        def infeasible(t, ast_id):
            raise InfeasibleLegError("no leg", target=ast_id)

        pool = [traj(1, 2), traj(2, 3)]
        with pytest.raises(PartialEnsembleError) as exc_info:
            ensemble_select(
                pool,
                10.0,
                1.0,
                rank=lambda t: 1.0,
                remove=infeasible,
                size=2,
                j_primes=[10.0, 9.0],
                max_blocked=3,
            )
        assert exc_info.value.achieved == 1

    def test_failed_repair_keeps_threshold(self):
        def infeasible(t, ast_id):
            raise InfeasibleLegError("no leg", target=ast_id)

        pool = [traj(1, 2), traj(2, 3), traj(4, 5)]
        result = ensemble_select(
            pool,
            9.5,
            1.0,
            seed=2,
            rank=lambda t: 1.0,
            remove=infeasible,
            size=2,
            j_primes=[10.0, 9.0, 5.0],
        )
        assert [t.asteroid_ids for t in result.trajectories] == [[1, 2], [4, 5]]
        assert result.threshold == pytest.approx(4.5)
        assert result.repairs == 0

    def test_two_shared_asteroids_not_repaired(self):
        pool = [traj(1, 2), traj(1, 2, 3)]
        with pytest.raises(PartialEnsembleError):
            ensemble_select(
                pool,
                1.0,
                0.5,
                rank=lambda t: 1.0,
                remove=drop,
                size=2,
                j_primes=[1.0, 1.0],
                max_blocked=3,
            )
