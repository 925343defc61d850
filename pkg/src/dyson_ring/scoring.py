"""Objective evaluation, trade-off analysis and full-solution validation."""

import functools
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .astro import OrbitalElements, RingConfig
from .batch import BatchRunner
from .constants import AU, KM
from .exceptions import DysonRingError, ParseError, PreconditionError
from .legs import MothershipTrajectory, recompute_dv, trajectory_violations
from .lowthrust import (
    POSITION_TOL_M,
    VELOCITY_TOL_MPS,
    TransferSolution,
    arrival_mass,
    endpoint_errors,
)
from .population import Asteroid, Population
from .result import Ok
from .scheduling import STATION_GAP, Schedule

logger = logging.getLogger(__name__)

SHIPS = 10
SOLUTION_FORMAT = "dyson-ring-solution/1"


@dataclass
class ScoreBreakdown:
    """Objective terms: M_min in kg, a_D in AU, delta-v in km/s."""

    M_min: float
    a_D: float
    dv_factor: float
    B: float
    J: float

    def to_dict(self) -> Dict:
        return {
            "M_min": self.M_min,
            "a_D": self.a_D,
            "dv_factor": self.dv_factor,
            "B": self.B,
            "J": self.J,
        }


def dv_factor(dv_totals: Sequence[float], ships: int = SHIPS) -> float:
    """Sum of (1 + dV/50)^2 with dV in km/s; absent ships count as 1 each.

    ``dv_totals`` are per-ship totals in m/s.
    """
    if len(dv_totals) > ships:
        raise PreconditionError("More trajectories than ships", count=len(dv_totals))
    factor = sum((1.0 + dv / KM / 50.0) ** 2 for dv in dv_totals)
    return factor + (ships - len(dv_totals))


def objective(M_min: float, a_D: float, dv_factor: float, B: float = 1.0) -> float:
    """B * 1e-10 * M_min / (a_D^2 * dv_factor) with M_min in kg and a_D in m."""
    a_au = a_D / AU
    return B * 1e-10 * M_min / (a_au * a_au * dv_factor)


def simplified_score(N: float, a_D: float, dv_tilde: float, m_arr: float) -> float:
    """N * m_arr / (a_D^2 (1 + 1.2 N dv_tilde / 50)^2), dv_tilde in km/s.

    Twelve ships each activating N asteroids at dv_tilde per asteroid, with
    constant factors dropped.
    """
    return N * m_arr / (a_D * a_D * (1.0 + 1.2 * N * dv_tilde / 50.0) ** 2)


def optimal_n(dv_tilde: float) -> float:
    """Asteroids per ship maximizing :func:`simplified_score`: 500 / (12 dv)."""
    if dv_tilde <= 0.0:
        raise PreconditionError("dv_tilde must be positive", dv_tilde=dv_tilde)
    return 500.0 / (12.0 * dv_tilde)


# ----------------------------------------------------------------------------
# Solution document
# ----------------------------------------------------------------------------


def _asteroid_to_dict(ast: Asteroid) -> Dict:
    el = ast.el
    return {
        "id": ast.id,
        "a": el.a,
        "e": el.e,
        "i": el.i,
        "raan": el.raan,
        "argp": el.argp,
        "M0": el.M0,
        "epoch0": el.epoch0,
        "m0": ast.m0,
    }


def _asteroid_from_dict(data: Dict) -> Asteroid:
    el = OrbitalElements(
        a=float(data["a"]),
        e=float(data["e"]),
        i=float(data["i"]),
        raan=float(data["raan"]),
        argp=float(data["argp"]),
        M0=float(data["M0"]),
        epoch0=float(data["epoch0"]),
    )
    return Asteroid(int(data["id"]), el, float(data["m0"]))


@dataclass
class Solution:
    """Ring, mother ships, schedule and the asteroids they reference."""

    ring: RingConfig
    ships: List[MothershipTrajectory]
    schedule: Schedule
    asteroids: Population
    B: float = 1.0

    @property
    def transfers(self) -> List[Tuple[int, int, Optional[TransferSolution]]]:
        """(asteroid, station, transfer) for every scheduled asteroid."""
        return [
            (a, j, opp.solution)
            for a, (j, opp) in sorted(self.schedule.assignment.items())
        ]

    def to_dict(self) -> Dict:
        return {
            "format": SOLUTION_FORMAT,
            "ring": {
                "a_D": self.ring.a_D,
                "i_D": self.ring.i_D,
                "raan_D": self.ring.raan_D,
                "phi1": self.ring.phi1,
            },
            "ships": [traj.to_dict() for traj in self.ships],
            "transfers": [
                {
                    "ast_id": a,
                    "station": j,
                    "solution": None if s is None else s.to_record(),
                }
                for a, j, s in self.transfers
            ],
            "schedule": self.schedule.to_dict(),
            "asteroids": [_asteroid_to_dict(ast) for ast in self.asteroids],
            "B": self.B,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Solution":
        if data.get("format") != SOLUTION_FORMAT:
            raise ParseError(f"Not a solution document: {data.get('format')!r}")
        ring = data["ring"]
        return cls(
            ring=RingConfig(
                a_D=float(ring["a_D"]),
                i_D=float(ring["i_D"]),
                raan_D=float(ring["raan_D"]),
                phi1=float(ring.get("phi1", 0.0)),
            ),
            ships=[MothershipTrajectory.from_dict(t) for t in data["ships"]],
            schedule=Schedule.from_dict(data["schedule"]),
            asteroids=Population(
                tuple(_asteroid_from_dict(a) for a in data["asteroids"]),
                {"source": "solution"},
            ),
            B=float(data.get("B", 1.0)),
        )

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Solution":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ParseError(f"Invalid JSON: {e.msg}", line=e.lineno, path=str(path))
        return cls.from_dict(data)


def score(sol: Solution, B: Optional[float] = None) -> ScoreBreakdown:
    """Objective of a solution; ``B`` defaults to the one stored with it."""
    B = sol.B if B is None else B
    factor = dv_factor([traj.dv_total for traj in sol.ships])
    M_min = sol.schedule.M_min
    J = objective(M_min, sol.ring.a_D, factor, B)
    return ScoreBreakdown(M_min, sol.ring.radius_au, factor, B, J)


# ----------------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------------


class ViolationCode(Enum):
    DUPLICATE_ASTEROID = "duplicate_asteroid"
    NOT_ACTIVATED = "not_activated"
    ACTIVATION_ORDER = "activation_order"
    LEG_BOUNDS = "leg_bounds"
    DV_LEDGER = "dv_ledger"
    WINDOW = "window"
    MISSING_TRANSFER = "missing_transfer"
    TRANSFER_MISMATCH = "transfer_mismatch"
    MASS_LEDGER = "mass_ledger"
    ENDPOINT = "endpoint"


@dataclass
class Violation:
    code: ViolationCode
    message: str
    ast_id: Optional[int] = None
    ship: Optional[int] = None

    def to_dict(self) -> Dict:
        return {
            "code": self.code.value,
            "message": self.message,
            "ast_id": self.ast_id,
            "ship": self.ship,
        }


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)
    transfers_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(
        self,
        code: ViolationCode,
        message: str,
        ast_id: Optional[int] = None,
        ship: Optional[int] = None,
    ) -> None:
        self.violations.append(Violation(code, message, ast_id, ship))

    def by_code(self, code: ViolationCode) -> List[Violation]:
        return [v for v in self.violations if v.code is code]

    def to_dict(self) -> Dict:
        return {
            "ok": self.ok,
            "transfers_checked": self.transfers_checked,
            "violations": [v.to_dict() for v in self.violations],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ValidationReport":
        violations = [
            Violation(
                ViolationCode(v["code"]), v["message"], v.get("ast_id"), v.get("ship")
            )
            for v in data.get("violations", [])
        ]
        return cls(violations, int(data.get("transfers_checked", 0)))

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))


def _check_ships(sol: Solution, report: ValidationReport) -> Dict[int, float]:
    activation: Dict[int, float] = {}
    for n, traj in enumerate(sol.ships):
        for problem in trajectory_violations(traj):
            report.add(ViolationCode.LEG_BOUNDS, problem, ship=n)
        for leg in traj.legs:
            a = leg.target_ast
            if a in activation:
                report.add(
                    ViolationCode.DUPLICATE_ASTEROID,
                    f"asteroid {a} activated more than once",
                    a,
                    n,
                )
            activation.setdefault(a, leg.t_arrival)
        try:
            dv = recompute_dv(traj, sol.asteroids)
        except DysonRingError as e:
            report.add(ViolationCode.DV_LEDGER, f"legs not re-evaluable: {e}", ship=n)
            continue
        if abs(dv - traj.dv_total) > 1e-6 * max(1.0, traj.dv_total) + 1e-3:
            report.add(
                ViolationCode.DV_LEDGER,
                f"stored dv {traj.dv_total:.6f} m/s, recomputed {dv:.6f} m/s",
                ship=n,
            )
    return activation


def _endpoint_check(
    sol: Solution, item: Tuple[int, TransferSolution]
) -> Tuple[float, float]:
    a, transfer = item
    return endpoint_errors(sol.asteroids.get(a), transfer, sol.ring)


def validate(
    sol: Solution,
    runner: Optional[BatchRunner] = None,
    gap: float = STATION_GAP,
    position_tol: float = POSITION_TOL_M,
    velocity_tol: float = VELOCITY_TOL_MPS,
) -> ValidationReport:
    """Check a solution from its primitive data and list every violation.

    Transfers are re-propagated from their stored costates; leg delta-v is
    recomputed from the leg variables; masses from the flight times.
    """
    report = ValidationReport()
    activation = _check_ships(sol, report)

    for problem in sol.schedule.violations(gap):
        report.add(ViolationCode.WINDOW, problem)

    to_propagate: List[Tuple[int, TransferSolution]] = []
    for a, j, transfer in sol.transfers:
        opp = sol.schedule.assignment[a][1]
        if a not in activation:
            report.add(ViolationCode.NOT_ACTIVATED, f"asteroid {a} never activated", a)
        if transfer is None:
            report.add(ViolationCode.MISSING_TRANSFER, f"asteroid {a}: no transfer", a)
            continue
        if a in activation and transfer.t0 < activation[a]:
            report.add(
                ViolationCode.ACTIVATION_ORDER,
                f"asteroid {a} departs before its activation",
                a,
            )
        if transfer.station_j != j or transfer.ast_id != a:
            report.add(
                ViolationCode.TRANSFER_MISMATCH,
                f"transfer of asteroid {a} targets station {transfer.station_j}, "
                f"scheduled for {j}",
                a,
            )
        if abs(opp.t_k - transfer.tf) > 1e-3:
            report.add(
                ViolationCode.TRANSFER_MISMATCH,
                f"asteroid {a}: scheduled arrival differs from transfer arrival",
                a,
            )
        if a not in sol.asteroids:
            report.add(ViolationCode.NOT_ACTIVATED, f"asteroid {a} is unknown", a)
            continue
        m = arrival_mass(sol.asteroids.get(a).m0, max(0.0, transfer.T))
        if not math.isclose(m, opp.m_k, rel_tol=1e-9, abs_tol=1e-6):
            report.add(
                ViolationCode.MASS_LEDGER,
                f"asteroid {a}: stored mass {opp.m_k:.6g} kg, recomputed {m:.6g} kg",
                a,
            )
        to_propagate.append((a, transfer))

    runner = runner or BatchRunner()
    check = functools.partial(_endpoint_check, sol)
    for (a, _), result in zip(to_propagate, runner.map(check, to_propagate)):
        if not isinstance(result, Ok):
            report.add(ViolationCode.ENDPOINT, f"asteroid {a}: propagation failed", a)
            continue
        dr, dv = result.value
        if dr > position_tol or dv > velocity_tol:
            report.add(
                ViolationCode.ENDPOINT,
                f"asteroid {a}: endpoint error {dr / KM:.3f} km, {dv:.4f} m/s",
                a,
            )
    report.transfers_checked = len(to_propagate)

    level = logging.INFO if report.ok else logging.WARNING
    logger.log(
        level,
        f"Validation: {len(report.violations)} violations over "
        f"{report.transfers_checked} transfers",
    )
    return report
