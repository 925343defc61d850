"""Tests for the time-sliced beam search."""

import math
import threading
from unittest.mock import Mock

import numpy as np
import pytest

from dyson_ring.astro import OrbitalElements, earth_elements, kepler_propagate
from dyson_ring.constants import AU, DAY, KM, MISSION_END
from dyson_ring.exceptions import InfeasibleLegError, PreconditionError
from dyson_ring.legs import ImpulsiveLeg, LegKind, MothershipTrajectory
from dyson_ring.lrts import (
    BeamParams,
    LRTSResult,
    lrts_pool,
    lrts_run,
    phasing_preselect,
    rank_j_prime,
)
from dyson_ring.population import Asteroid, Population

LEG_DAYS = 150.0


def asteroid(ast_id, M0, a_au=2.4, m0=5e13):
    el = OrbitalElements(a_au * AU, 0.05, 0.02, 0.0, 0.0, M0)
    return Asteroid(ast_id, el, m0)


@pytest.fixture
def pop():
    rng = np.random.default_rng(7)
    phases = rng.uniform(0.0, 2 * math.pi, size=12)
    masses = rng.uniform(1e13, 1e14, size=12)
    members = [
        asteroid(k + 1, float(phases[k]), m0=float(masses[k])) for k in range(12)
    ]
    return Population(tuple(members))


@pytest.fixture
def estimator():
    est = Mock()
    est.estimate.return_value = 0.0
    return est


def fake_e2a(target, seed):
    leg = ImpulsiveLeg(LegKind.E2A, target.id, 0.0, LEG_DAYS * DAY, 0.0, 0.0, 0.5, 0.0)
    leg.dv_dsm = 0.2 * KM * (target.id % 4)
    return leg


def fake_a2a(state0, target, seed):
    leg = ImpulsiveLeg(
        LegKind.A2A, target.id, state0.t, LEG_DAYS * DAY, 0.5 * KM, 0.0, 0.5, 0.0
    )
    leg.dv_departure = 0.5 * KM
    leg.dv_dsm = 0.1 * KM * (target.id % 3)
    return leg


def run(pop, estimator, params=None, seed=0, **kwargs):
    params = params or BeamParams(b=2, g=2)
    return lrts_run(
        pop,
        params,
        estimator,
        seed=seed,
        e2a_solver=kwargs.pop("e2a", fake_e2a),
        a2a_solver=kwargs.pop("a2a", fake_a2a),
        **kwargs,
    )


class TestBeamParams:
    def test_rejects_empty_beam(self):
        with pytest.raises(PreconditionError):
            BeamParams(b=0)
        with pytest.raises(PreconditionError):
            BeamParams(g=0)

    def test_rejects_bad_slice(self):
        with pytest.raises(PreconditionError):
            BeamParams(slice_days=0.0)

    def test_slice_of(self):
        params = BeamParams(slice_days=100.0)
        assert params.slice_of(0.0) == 0
        assert params.slice_of(99.9 * DAY) == 0
        assert params.slice_of(100.0 * DAY) == 1
        assert params.slice_of(250.0 * DAY) == 2


class TestRanking:
    """rank_j_prime and phasing preselection."""

    def test_empty_trajectory_scores_zero(self, pop, estimator):
        assert rank_j_prime(MothershipTrajectory(), AU, estimator, pop) == 0.0

    def test_rank_formula(self, pop, estimator):
        traj = MothershipTrajectory([fake_e2a(pop.get(3), 0)])
        a_D = 1.3198 * AU
        expected = pop.get(3).m0 / (1.3198**2 * (1 + traj.dv_total / KM / 50) ** 2)
        assert rank_j_prime(traj, a_D, estimator, pop) == pytest.approx(expected)

    def test_rank_uses_estimated_arrival_mass(self, pop):
        est = Mock()
        est.estimate.return_value = 1e8
        traj = MothershipTrajectory([fake_e2a(pop.get(2), 0)])
        heavy = rank_j_prime(traj, AU, Mock(estimate=Mock(return_value=0.0)), pop)
        expected = heavy * (1 - 6e-9 * 1e8)
        assert rank_j_prime(traj, AU, est, pop) == pytest.approx(expected)

    def test_preselect_nearest_first(self):
        cands = [
            Asteroid(1, OrbitalElements(AU, 0.01, 0.0, 0.0, 0.0, 3.0), 1e13),
            Asteroid(2, OrbitalElements(AU, 0.01, 0.0, 0.0, 0.0, 0.02), 1e13),
            Asteroid(3, OrbitalElements(AU, 0.01, 0.0, 0.0, 0.0, 1.0), 1e13),
        ]
        earth = kepler_propagate(earth_elements(), 0.0)
        assert phasing_preselect(earth, cands, 200 * DAY, 3) == [2, 3, 1]
        assert phasing_preselect(earth, cands, 200 * DAY, 1) == [2]
        assert phasing_preselect(earth, cands, 200 * DAY, 5, exclude=[2]) == [3, 1]

    def test_preselect_with_velocity_weight(self):
        cands = [Asteroid(1, OrbitalElements(AU, 0.01, 0.0, 0.0, 0.0, 0.1), 1e13)]
        earth = kepler_propagate(earth_elements(), 0.0)
        assert phasing_preselect(earth, cands, 200 * DAY, 1, weight=10.0) == [1]

    def test_preselect_degenerate(self, pop):
        earth = kepler_propagate(earth_elements(), 0.0)
        assert phasing_preselect(earth, pop, 200 * DAY, 0) == []
        assert phasing_preselect(earth, pop, 200 * DAY, 3, exclude=pop.ids) == []


class TestLrtsRun:
    """lrts_run with injected leg solvers."""

    def test_empty_population(self, estimator):
        result = lrts_run(None, BeamParams(), estimator)
        assert isinstance(result, LRTSResult)
        assert len(result) == 0
        assert result.best is None

    def test_sorted_by_rank(self, pop, estimator):
        result = run(pop, estimator)
        assert len(result) > 0
        assert result.j_primes == sorted(result.j_primes, reverse=True)
        assert result.best is result.trajectories[0]

    def test_trajectories_are_feasible_chains(self, pop, estimator):
        result = run(pop, estimator)
        for traj in result.trajectories:
            ids = traj.asteroid_ids
            assert len(ids) == len(set(ids))
            assert traj.legs[0].kind is LegKind.E2A
            assert all(leg.kind is LegKind.A2A for leg in traj.legs[1:])
            assert traj.elapsed <= MISSION_END

    def test_work_bounds(self, pop, estimator):
        params = BeamParams(b=2, g=3)
        result = run(pop, estimator, params)
        assert result.slices >= 1
        assert result.expansions <= result.slices * params.b * params.g
        assert result.leg_solves <= result.slices * params.b * params.g

    def test_short_legs_respect_cost_bound(self, estimator):
        """Legs much shorter than a slice must not reopen the slice."""
        rng = np.random.default_rng(5)
        members = [
            asteroid(k + 1, float(phase), m0=float(m))
            for k, (phase, m) in enumerate(
                zip(rng.uniform(0.0, 2 * math.pi, 30), rng.uniform(1e13, 1e14, 30))
            )
        ]
        crowd = Population(tuple(members))

        def short(state0, target, seed):
            leg = fake_a2a(state0, target, seed)
            leg.T = 21 * DAY
            return leg

        params = BeamParams(b=2, g=2)
        result = run(crowd, estimator, params, a2a=short)
        bound = result.slices * params.b * params.g
        assert result.leg_solves <= bound
        assert result.expansions <= bound
        assert max(len(t) for t in result.trajectories) > 2

    def test_screen_picks_cheapest_candidates(self, pop, estimator):
        screened, solved = [], []

        def screen(kind, start, target):
            if kind is LegKind.E2A:
                screened.append(target.id)
            return float(target.id)

        def e2a(target, seed):
            solved.append(target.id)
            return fake_e2a(target, seed)

        params = BeamParams(b=2, g=2)
        run(pop, estimator, params, e2a=e2a, screen_solver=screen)
        assert len(screened) == 2 * params.g
        assert sorted(solved) == sorted(screened)[: params.g]

    def test_chains_grow_past_first_slice(self, pop, estimator):
        result = run(pop, estimator)
        assert max(len(t) for t in result.trajectories) > 2

    def test_deterministic(self, pop, estimator):
        a = run(pop, estimator, seed=3)
        b = run(pop, estimator, seed=3)
        assert [t.asteroid_ids for t in a.trajectories] == [
            t.asteroid_ids for t in b.trajectories
        ]
        assert a.leg_solves == b.leg_solves

    def test_failed_legs_are_skipped(self, pop, estimator):
        def picky(state0, target, seed):
            if target.id % 2:
                raise InfeasibleLegError("odd", target=target.id)
            return fake_a2a(state0, target, seed)

        result = run(pop, estimator, a2a=picky)
        for traj in result.trajectories:
            assert all(i % 2 == 0 for i in traj.asteroid_ids[1:])

    def test_late_arrivals_dropped(self, pop, estimator):
        def too_long(state0, target, seed):
            leg = fake_a2a(state0, target, seed)
            leg.T = MISSION_END
            return leg

        result = run(pop, estimator, a2a=too_long)
        assert all(len(t) == 1 for t in result.trajectories)

    def test_stop_after_root(self, pop, estimator):
        stop = threading.Event()
        stop.set()
        params = BeamParams(b=2, g=2)
        result = run(pop, estimator, params, stop_event=stop)
        assert result.slices == 1
        assert len(result) <= params.g
        assert all(len(t) == 1 for t in result.trajectories)


class TestLrtsPool:
    def test_pool_drops_duplicate_sequences(self, pop, estimator):
        single = run(pop, estimator, seed=0)
        pooled = lrts_pool(
            pop,
            BeamParams(b=2, g=2),
            estimator,
            seeds=[0, 1],
            e2a_solver=fake_e2a,
            a2a_solver=fake_a2a,
        )
        keys = [tuple(t.asteroid_ids) for t in pooled.trajectories]
        assert len(keys) == len(set(keys))
        # solvers ignore the seed, so both runs find the same sequences
        assert len(pooled) == len(single)
        assert pooled.leg_solves == 2 * single.leg_solves
        assert pooled.j_primes == sorted(pooled.j_primes, reverse=True)
