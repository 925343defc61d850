"""Tests for the objective, trade-off analysis and solution validation."""

from unittest.mock import Mock, patch

import numpy as np
import pytest

from dyson_ring.astro import OrbitalElements, RingConfig
from dyson_ring.constants import AU, DAY, KM, MISSION_END
from dyson_ring.exceptions import ParseError, PreconditionError
from dyson_ring.legs import ImpulsiveLeg, LegKind, MothershipTrajectory
from dyson_ring.lowthrust import Costates, TransferSolution, arrival_mass
from dyson_ring.population import Asteroid, Population
from dyson_ring.ring import Opportunity
from dyson_ring.scheduling import Schedule, WindowAllocation
from dyson_ring.scoring import (
    Solution,
    ValidationReport,
    ViolationCode,
    dv_factor,
    objective,
    optimal_n,
    score,
    simplified_score,
    validate,
)


class TestObjective:
    """Objective formula and dV factor."""

    def test_reference_value(self):
        J = objective(2.0125e15, 1.3198 * AU, 19.1269)
        assert J == pytest.approx(2.0125e5 / (1.3198**2 * 19.1269), rel=1e-9)
        assert J == pytest.approx(6.04e3, rel=1e-3)

    def test_bonus_scales_linearly(self):
        base = objective(1e15, 1.2 * AU, 12.0)
        assert objective(1e15, 1.2 * AU, 12.0, B=1.5) == pytest.approx(1.5 * base)

    def test_absent_ships_count_one(self):
        assert dv_factor([]) == 10.0
        assert dv_factor([50 * KM]) == pytest.approx(4.0 + 9.0)

    def test_too_many_ships(self):
        with pytest.raises(PreconditionError):
            dv_factor([0.0] * 11)

    def test_score_uses_stored_bonus(self):
        sol = Mock(
            B=1.0,
            ships=[MothershipTrajectory()] * 10,
            schedule=Mock(M_min=2.0125e15),
            ring=RingConfig(1.3198 * AU),
        )
        breakdown = score(sol)
        assert breakdown.dv_factor == 10.0
        assert breakdown.a_D == pytest.approx(1.3198)
        assert breakdown.J == pytest.approx(2.0125e5 / (1.3198**2 * 10.0))
        assert score(sol, B=2.0).J == pytest.approx(2 * breakdown.J)
        assert set(breakdown.to_dict()) == {"M_min", "a_D", "dv_factor", "B", "J"}


class TestTradeOff:
    """Asteroids-per-ship trade-off."""

    def test_optimal_n_for_one_km_s(self):
        assert optimal_n(1.0) == pytest.approx(41.67, abs=0.1)

    def test_integer_argmax_agrees(self):
        N = np.arange(1, 200)
        values = simplified_score(N, 1.0, 1.0, 1.0)
        assert abs(int(N[np.argmax(values)]) - optimal_n(1.0)) <= 1

    def test_derivative_vanishes_at_optimum(self):
        for dv in (0.5, 1.0, 2.0):
            n = optimal_n(dv)
            h = 1e-6 * n
            slope = (
                simplified_score(n + h, 1.0, dv, 1.0)
                - simplified_score(n - h, 1.0, dv, 1.0)
            ) / (2 * h)
            assert abs(slope) < 1e-9 * simplified_score(n, 1.0, dv, 1.0) / h

    def test_needs_positive_dv(self):
        with pytest.raises(PreconditionError):
            optimal_n(0.0)


# ----------------------------------------------------------------------------
# Solution validation
# ----------------------------------------------------------------------------

M0 = 5e13


def make_solution():
    asteroids = Population(
        tuple(
            Asteroid(k, OrbitalElements(2.5 * AU, 0.1, 0.1, 0.0, 0.0, 0.5 * k), M0)
            for k in (1, 2)
        )
    )
    ship = MothershipTrajectory(
        [
            ImpulsiveLeg(LegKind.E2A, 1, 0.0, 200 * DAY, 3 * KM, 0.1, 0.5, 0.3),
            ImpulsiveLeg(LegKind.A2A, 2, 200 * DAY, 100 * DAY, 1 * KM, 0.2, 0.5, 0.3),
        ]
    )
    ship.legs[0].dv_dsm = 1.5 * KM
    ship.legs[1].dv_departure = 1.0 * KM
    allocation = WindowAllocation.uniform(0.0, MISSION_END)

    assignment = {}
    for a, t_act, j in [(1, 200 * DAY, 2), (2, 300 * DAY, 3)]:
        tf = allocation.window(j)[0] + 30 * DAY
        transfer = TransferSolution(
            ast_id=a,
            station_j=j,
            t0=t_act,
            tf=tf,
            costates0=Costates([0.1, 0.0, 0.0], [0.0, 1.0, 0.0]),
            m_arr=arrival_mass(M0, tf - t_act),
            converged=True,
            residual_norm=1e-12,
        )
        assignment[a] = (j, Opportunity(tf, transfer.m_arr, transfer))
    schedule = Schedule(allocation, assignment)
    return Solution(RingConfig(1.3 * AU), [ship], schedule, asteroids)


@pytest.fixture
def solution():
    return make_solution()


@pytest.fixture
def exact_ledgers():
    with patch(
        "dyson_ring.scoring.recompute_dv", side_effect=lambda traj, pop: traj.dv_total
    ), patch("dyson_ring.scoring.endpoint_errors", return_value=(0.0, 0.0)):
        yield


def codes(report):
    return {v.code for v in report.violations}


@pytest.mark.usefixtures("exact_ledgers")
class TestValidate:
    """validate() on hand-built solutions."""

    def test_consistent_solution(self, solution):
        report = validate(solution)
        assert report.ok
        assert report.transfers_checked == 2

    def test_mass_ledger(self, solution):
        _, opp = solution.schedule.assignment[1]
        opp.m_k *= 1.01
        assert codes(validate(solution)) == {ViolationCode.MASS_LEDGER}

    def test_departure_before_activation(self, solution):
        _, opp = solution.schedule.assignment[2]
        opp.solution.t0 = 100 * DAY
        opp.m_k = arrival_mass(M0, opp.solution.T)
        assert codes(validate(solution)) == {ViolationCode.ACTIVATION_ORDER}

    def test_unactivated_asteroid(self, solution):
        solution.ships[0].legs.pop()
        assert ViolationCode.NOT_ACTIVATED in codes(validate(solution))

    def test_missing_transfer(self, solution):
        _, opp = solution.schedule.assignment[1]
        opp.solution = None
        report = validate(solution)
        assert codes(report) == {ViolationCode.MISSING_TRANSFER}
        assert report.transfers_checked == 1

    def test_station_mismatch(self, solution):
        j, opp = solution.schedule.assignment[1]
        solution.schedule.assignment[1] = (j + 1, opp)
        report = validate(solution)
        assert ViolationCode.TRANSFER_MISMATCH in codes(report)

    def test_arrival_outside_window(self, solution):
        j, opp = solution.schedule.assignment[1]
        solution.schedule.assignment[1] = (j + 5, opp)
        assert ViolationCode.WINDOW in codes(validate(solution))

    def test_duplicate_activation(self, solution):
        solution.ships.append(
            MothershipTrajectory(
                [ImpulsiveLeg(LegKind.E2A, 1, 0.0, 150 * DAY, 2 * KM, 0.0, 0.5, 0.0)]
            )
        )
        assert ViolationCode.DUPLICATE_ASTEROID in codes(validate(solution))

    def test_leg_bounds(self, solution):
        solution.ships[0].legs[1].T = 500 * DAY
        assert ViolationCode.LEG_BOUNDS in codes(validate(solution))

    def test_endpoint_error(self, solution):
        with patch("dyson_ring.scoring.endpoint_errors", return_value=(5000 * KM, 0.0)):
            report = validate(solution)
        assert len(report.by_code(ViolationCode.ENDPOINT)) == 2

    def test_propagation_failure(self, solution):
        with patch(
            "dyson_ring.scoring.endpoint_errors", side_effect=RuntimeError("boom")
        ):
            report = validate(solution)
        assert len(report.by_code(ViolationCode.ENDPOINT)) == 2


class TestValidateLedger:
    def test_dv_ledger_mismatch(self, solution):
        with patch(
            "dyson_ring.scoring.recompute_dv",
            side_effect=lambda traj, pop: traj.dv_total + 10.0,
        ), patch("dyson_ring.scoring.endpoint_errors", return_value=(0.0, 0.0)):
            report = validate(solution)
        assert codes(report) == {ViolationCode.DV_LEDGER}
        assert report.by_code(ViolationCode.DV_LEDGER)[0].ship == 0


class TestSolutionDocument:
    """Solution and report persistence."""

    def test_save_and_load(self, tmp_path, solution):
        path = tmp_path / "solution.json"
        solution.save(path)
        loaded = Solution.load(path)
        assert loaded.ring.a_D == solution.ring.a_D
        assert loaded.ships[0].asteroid_ids == [1, 2]
        assert loaded.ships[0].dv_total == pytest.approx(solution.ships[0].dv_total)
        assert loaded.schedule.M_min == solution.schedule.M_min
        assert [a for a, _, _ in loaded.transfers] == [1, 2]
        assert loaded.transfers[0][2].tf == solution.transfers[0][2].tf
        assert sorted(loaded.asteroids.ids) == [1, 2]

    def test_wrong_format(self):
        with pytest.raises(ParseError):
            Solution.from_dict({"format": "something-else"})

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "solution.json"
        path.write_text("[")
        with pytest.raises(ParseError):
            Solution.load(path)

    def test_report_round_trip(self, tmp_path):
        report = ValidationReport(transfers_checked=3)
        report.add(ViolationCode.WINDOW, "late", ast_id=4)
        data = report.to_dict()
        assert data["ok"] is False
        loaded = ValidationReport.from_dict(data)
        assert loaded.violations[0].code is ViolationCode.WINDOW
        assert loaded.violations[0].ast_id == 4
        assert loaded.transfers_checked == 3
        report.save(tmp_path / "report.json")
        assert (tmp_path / "report.json").exists()
