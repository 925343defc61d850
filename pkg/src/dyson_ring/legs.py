"""Impulsive mother-ship legs: departure impulse, coast, Lambert arc, rendezvous.

Every leg is described by its decision variables alone; impulses, arrival
states and residuals are always recomputed from them.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .astro import (
    StateVector,
    earth_elements,
    kepler_propagate,
    lambert_solve,
    propagate_state,
)
from .constants import DAY, KM, MISSION_END, YEAR
from .exceptions import DysonRingError, InfeasibleLegError, PreconditionError
from .jde import jde_optimize
from .population import Asteroid, Population

logger = logging.getLogger(__name__)

LAUNCH_DISCOUNT = 6.0 * KM
DEPLOY_ALLOWANCE = 2.0 * KM
# Objective value used by gradient solvers where a leg has no Lambert solution.
INFEASIBLE_PENALTY = 1e6


class LegKind(Enum):
    E2A = "E2A"
    A2A = "A2A"


@dataclass
class LegBounds:
    """Box for the leg decision variables (SI units)."""

    launch_window: Tuple[float, float] = (0.0, 2.0 * YEAR)
    e2a_max_days: float = 480.0
    a2a_max_days: float = 380.0
    min_days: float = 20.0
    e2a_v_inf_max: float = 10.0 * KM
    a2a_v_inf_max: float = 5.0 * KM
    eta_bounds: Tuple[float, float] = (0.0, 0.95)

    def max_duration(self, kind: LegKind) -> float:
        days = self.e2a_max_days if kind is LegKind.E2A else self.a2a_max_days
        return days * DAY

    def v_inf_max(self, kind: LegKind) -> float:
        return self.e2a_v_inf_max if kind is LegKind.E2A else self.a2a_v_inf_max


@dataclass
class ImpulsiveLeg:
    kind: LegKind
    target_ast: int
    t_start: float
    T: float
    v_inf: float
    u: float
    v: float
    eta: float
    dv_departure: float = 0.0
    dv_dsm: float = 0.0
    dv_arrival: float = 0.0

    @property
    def t_arrival(self) -> float:
        return self.t_start + self.T

    @property
    def dv_total(self) -> float:
        return self.dv_departure + self.dv_dsm + self.dv_arrival

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value,
            "target_ast": self.target_ast,
            "t_start": self.t_start,
            "T": self.T,
            "v_inf": self.v_inf,
            "u": self.u,
            "v": self.v,
            "eta": self.eta,
            "dv_departure": self.dv_departure,
            "dv_dsm": self.dv_dsm,
            "dv_arrival": self.dv_arrival,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ImpulsiveLeg":
        values = dict(data)
        values["kind"] = LegKind(values["kind"])
        values["target_ast"] = int(values["target_ast"])
        return cls(**values)


@dataclass
class MothershipTrajectory:
    """Earth launch followed by impulsive legs, one ATD deployed per arrival."""

    legs: List[ImpulsiveLeg] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def asteroid_ids(self) -> List[int]:
        return [leg.target_ast for leg in self.legs]

    @property
    def activation_epochs(self) -> List[float]:
        return [leg.t_arrival for leg in self.legs]

    @property
    def dv_total(self) -> float:
        return sum(leg.dv_total for leg in self.legs)

    @property
    def elapsed(self) -> float:
        return self.legs[-1].t_arrival if self.legs else 0.0

    def __len__(self) -> int:
        return len(self.legs)

    def extended(self, leg: ImpulsiveLeg) -> "MothershipTrajectory":
        return MothershipTrajectory(self.legs + [leg], list(self.warnings))

    def activation_of(self, ast_id: int) -> float:
        for leg in self.legs:
            if leg.target_ast == ast_id:
                return leg.t_arrival
        raise KeyError(ast_id)

    def to_dict(self) -> Dict:
        return {
            "asteroid_ids": self.asteroid_ids,
            "activation_epochs": self.activation_epochs,
            "dv_total": self.dv_total,
            "legs": [leg.to_dict() for leg in self.legs],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MothershipTrajectory":
        return cls(
            [ImpulsiveLeg.from_dict(leg) for leg in data["legs"]],
            list(data.get("warnings", [])),
        )


# ----------------------------------------------------------------------------
# Leg model
# ----------------------------------------------------------------------------


def departure_direction(u: float, v: float) -> np.ndarray:
    """Unit vector from the uniform-sphere parametrization (u, v) in [0, 1]^2."""
    theta = 2.0 * math.pi * u
    phi = math.acos(max(-1.0, min(1.0, 2.0 * v - 1.0))) - 0.5 * math.pi
    cp = math.cos(phi)
    return np.array([cp * math.cos(theta), cp * math.sin(theta), math.sin(phi)])


def departure_state(
    kind: LegKind, t_start: float, previous: Optional[Asteroid] = None
) -> StateVector:
    """Mother-ship state before the departure impulse."""
    if kind is LegKind.E2A:
        return kepler_propagate(earth_elements(), t_start)
    if previous is None:
        raise PreconditionError("A2A legs need the departure asteroid")
    return kepler_propagate(previous.el, t_start)


@dataclass
class LegEvaluation:
    dv_departure: float
    dv_dsm: float
    dv_arrival: float
    arrival: StateVector
    dsm_state: StateVector
    lambert_v1: np.ndarray

    @property
    def dv_total(self) -> float:
        return self.dv_departure + self.dv_dsm + self.dv_arrival


def _evaluate(
    kind: LegKind,
    start: StateVector,
    target: Asteroid,
    T: float,
    v_inf: float,
    u: float,
    v: float,
    eta: float,
) -> LegEvaluation:
    if T <= 0.0 or not 0.0 <= eta < 1.0:
        raise PreconditionError("Leg needs T > 0 and eta in [0, 1)", T=T, eta=eta)
    t0 = start.t
    v_dep = start.v + v_inf * departure_direction(u, v)
    coast = StateVector(start.r, v_dep, t0)
    if eta > 0.0:
        coast = propagate_state(coast, eta * T)
    arrival = kepler_propagate(target.el, t0 + T)
    v1, v2 = lambert_solve(coast.r, arrival.r, (1.0 - eta) * T)
    dv_dep = max(0.0, v_inf - LAUNCH_DISCOUNT) if kind is LegKind.E2A else v_inf
    dv_dsm = float(np.linalg.norm(v1 - coast.v))
    dv_arr = max(0.0, float(np.linalg.norm(v2 - arrival.v)) - DEPLOY_ALLOWANCE)
    return LegEvaluation(dv_dep, dv_dsm, dv_arr, arrival, coast, v1)


def leg_cost(
    kind: LegKind,
    start: StateVector,
    target: Asteroid,
    T: float,
    v_inf: float,
    u: float,
    v: float,
    eta: float,
) -> Tuple[float, StateVector]:
    """Total leg delta-v (m/s) and the post-deployment (asteroid) state.

    Lambert failures give ``(inf, arrival)`` so evolutionary search can rank them.
    """
    try:
        ev = _evaluate(kind, start, target, T, v_inf, u, v, eta)
    except DysonRingError:
        return math.inf, kepler_propagate(target.el, start.t + T)
    return ev.dv_total, ev.arrival


def lambert_screen(
    kind: LegKind,
    start: StateVector,
    target: Asteroid,
    durations: Sequence[float],
) -> float:
    """Cheapest two-impulse delta-v (m/s) over trial durations, no optimization.

    Departs from ``start`` as is, applies the leg's discount rules and returns
    ``inf`` when no trial duration has a Lambert solution.
    """
    discount = LAUNCH_DISCOUNT if kind is LegKind.E2A else 0.0
    best = math.inf
    for T in durations:
        arrival = kepler_propagate(target.el, start.t + T)
        try:
            v1, v2 = lambert_solve(start.r, arrival.r, T)
        except DysonRingError:
            continue
        dv_dep = max(0.0, float(np.linalg.norm(v1 - start.v)) - discount)
        dv_arr = max(0.0, float(np.linalg.norm(v2 - arrival.v)) - DEPLOY_ALLOWANCE)
        best = min(best, dv_dep + dv_arr)
    return best


def evaluate_leg(
    leg: ImpulsiveLeg, target: Asteroid, previous: Optional[Asteroid] = None
) -> LegEvaluation:
    """Recompute a stored leg from its decision variables."""
    start = departure_state(leg.kind, leg.t_start, previous)
    return _evaluate(leg.kind, start, target, leg.T, leg.v_inf, leg.u, leg.v, leg.eta)


def leg_residual(
    leg: ImpulsiveLeg, target: Asteroid, previous: Optional[Asteroid] = None
) -> float:
    """Position miss (m) at arrival after applying the impulses and re-propagating."""
    ev = evaluate_leg(leg, target, previous)
    after_dsm = StateVector(ev.dsm_state.r, ev.lambert_v1, ev.dsm_state.t)
    end = propagate_state(after_dsm, (1.0 - leg.eta) * leg.T)
    return float(np.linalg.norm(end.r - ev.arrival.r))


def _make_leg(
    kind: LegKind,
    target: Asteroid,
    t_start: float,
    x: Sequence[float],
    previous: Optional[Asteroid],
) -> ImpulsiveLeg:
    T, v_inf, u, v, eta = (float(c) for c in x)
    leg = ImpulsiveLeg(kind, target.id, t_start, T, v_inf, u, v, eta)
    ev = evaluate_leg(leg, target, previous)
    leg.dv_departure, leg.dv_dsm, leg.dv_arrival = (
        ev.dv_departure,
        ev.dv_dsm,
        ev.dv_arrival,
    )
    return leg


# ----------------------------------------------------------------------------
# Global leg optimization
# ----------------------------------------------------------------------------


@dataclass
class LegSearch:
    """jDE budget per leg."""

    pop_size: int = 30
    generations: int = 150


def _impulse_bounds(kind: LegKind, bounds: LegBounds) -> List[Tuple[float, float]]:
    return [
        (0.0, bounds.v_inf_max(kind)),
        (0.0, 1.0),
        (0.0, 1.0),
        bounds.eta_bounds,
    ]


def solve_e2a(
    target: Asteroid,
    t0_bounds: Optional[Tuple[float, float]] = None,
    seed: Optional[int] = 0,
    bounds: Optional[LegBounds] = None,
    search: Optional[LegSearch] = None,
    arrival: Optional[float] = None,
) -> ImpulsiveLeg:
    """Earth-to-asteroid leg over [t0, T, v_inf, u, v, eta].

    With ``arrival`` given the arrival epoch is fixed and T = arrival - t0.
    """
    bounds = bounds or LegBounds()
    search = search or LegSearch()
    lo, hi = t0_bounds or bounds.launch_window
    T_min, T_max = bounds.min_days * DAY, bounds.max_duration(LegKind.E2A)
    if arrival is not None:
        lo, hi = max(lo, arrival - T_max), min(hi, arrival - T_min)
        if hi < lo:
            raise InfeasibleLegError(
                "Fixed arrival unreachable from the launch window", target=target.id
            )
    rest = _impulse_bounds(LegKind.E2A, bounds)
    earth = earth_elements()

    def split(x: np.ndarray) -> Tuple[float, np.ndarray]:
        if arrival is None:
            return x[0], x[1:]
        return x[0], np.concatenate([[arrival - x[0]], x[1:]])

    def objective(x: np.ndarray) -> float:
        t0, y = split(x)
        start = kepler_propagate(earth, t0)
        return leg_cost(LegKind.E2A, start, target, *y)[0]

    box = [(lo, hi)] + ([] if arrival is not None else [(T_min, T_max)]) + rest
    result = jde_optimize(objective, box, search.pop_size, search.generations, seed)
    if not math.isfinite(result.fun):
        raise InfeasibleLegError("No feasible Earth departure found", target=target.id)
    t0, y = split(result.x)
    return _make_leg(LegKind.E2A, target, float(t0), y, None)


def solve_a2a(
    state0: StateVector,
    target: Asteroid,
    seed: Optional[int] = 0,
    bounds: Optional[LegBounds] = None,
    search: Optional[LegSearch] = None,
    arrival: Optional[float] = None,
) -> ImpulsiveLeg:
    """Asteroid-to-asteroid leg from ``state0`` over [T, v_inf, u, v, eta].

    The departure impulse is charged in full. With ``arrival`` fixed only the
    four impulse variables remain.
    """
    bounds = bounds or LegBounds()
    search = search or LegSearch()
    T_min, T_max = bounds.min_days * DAY, bounds.max_duration(LegKind.A2A)
    if state0.t + T_min > MISSION_END:
        raise InfeasibleLegError("Mission time exhausted", target=target.id)
    T_max = min(T_max, MISSION_END - state0.t)
    rest = _impulse_bounds(LegKind.A2A, bounds)

    if arrival is not None:
        T_fixed = arrival - state0.t
        if T_fixed <= 0.0:
            raise InfeasibleLegError(
                "Fixed arrival precedes departure", target=target.id
            )

        def objective(x: np.ndarray) -> float:
            return leg_cost(LegKind.A2A, state0, target, T_fixed, *x)[0]

        box = rest
    else:

        def objective(x: np.ndarray) -> float:
            return leg_cost(LegKind.A2A, state0, target, *x)[0]

        box = [(T_min, T_max)] + rest

    result = jde_optimize(objective, box, search.pop_size, search.generations, seed)
    if not math.isfinite(result.fun):
        raise InfeasibleLegError(
            "No feasible asteroid transfer found", target=target.id
        )
    x = result.x if arrival is None else np.concatenate([[T_fixed], result.x])
    T, v_inf, u, v, eta = (float(c) for c in x)
    leg = ImpulsiveLeg(LegKind.A2A, target.id, state0.t, T, v_inf, u, v, eta)
    ev = _evaluate(LegKind.A2A, state0, target, T, v_inf, u, v, eta)
    leg.dv_departure, leg.dv_dsm, leg.dv_arrival = (
        ev.dv_departure,
        ev.dv_dsm,
        ev.dv_arrival,
    )
    return leg


# ----------------------------------------------------------------------------
# Whole-trajectory operations
# ----------------------------------------------------------------------------


def _leg_vector(leg: ImpulsiveLeg) -> List[float]:
    head = [leg.t_start] if leg.kind is LegKind.E2A else []
    return head + [leg.T, leg.v_inf, leg.u, leg.v, leg.eta]


def _rebuild(
    traj: MothershipTrajectory, x: np.ndarray, pop: Population
) -> MothershipTrajectory:
    legs: List[ImpulsiveLeg] = []
    k = 0
    t = 0.0
    previous: Optional[Asteroid] = None
    for leg in traj.legs:
        if leg.kind is LegKind.E2A:
            t = float(x[k])
            k += 1
        T, v_inf, u, v, eta = (float(c) for c in x[k : k + 5])
        k += 5
        target = pop.get(leg.target_ast)
        new = _make_leg(leg.kind, target, t, [T, v_inf, u, v, eta], previous)
        legs.append(new)
        t = new.t_arrival
        previous = target
    return MothershipTrajectory(legs, list(traj.warnings))


def trajectory_violations(
    traj: MothershipTrajectory, bounds: Optional[LegBounds] = None
) -> List[str]:
    """Time-bound and ordering problems of a trajectory (empty when feasible)."""
    bounds = bounds or LegBounds()
    problems = []
    last = -math.inf
    seen = set()
    for n, leg in enumerate(traj.legs):
        if leg.T > bounds.max_duration(leg.kind) * (1 + 1e-9):
            problems.append(f"leg {n}: duration above bound")
        if leg.t_arrival <= last:
            problems.append(f"leg {n}: activation epochs not increasing")
        if leg.t_start < -1e-6 or leg.t_arrival > MISSION_END + 1e-6:
            problems.append(f"leg {n}: outside mission")
        if leg.target_ast in seen:
            problems.append(f"leg {n}: asteroid {leg.target_ast} repeated")
        seen.add(leg.target_ast)
        last = leg.t_arrival
    return problems


def refine_trajectory(
    traj: MothershipTrajectory,
    pop: Population,
    maxiter: int = 10,
    bounds: Optional[LegBounds] = None,
) -> MothershipTrajectory:
    """SLSQP over all continuous leg variables with the visiting order fixed.

    The result is accepted only if it is feasible and its delta-v is lower;
    otherwise the input comes back with a warning attached.
    """
    if not traj.legs:
        return traj
    if traj.legs[0].kind is not LegKind.E2A:
        raise PreconditionError("Trajectory must start with an Earth departure")
    bounds = bounds or LegBounds()
    x0 = np.concatenate([_leg_vector(leg) for leg in traj.legs])
    box: List[Tuple[float, float]] = []
    T_min = bounds.min_days * DAY
    for leg in traj.legs:
        if leg.kind is LegKind.E2A:
            box.append(bounds.launch_window)
        box.append((T_min, bounds.max_duration(leg.kind)))
        box.extend(_impulse_bounds(leg.kind, bounds))
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    scale = np.where(hi - lo > 0.0, hi - lo, 1.0)
    z0 = (np.clip(x0, lo, hi) - lo) / scale

    def unpack(z: np.ndarray) -> np.ndarray:
        return lo + np.clip(z, 0.0, 1.0) * scale

    def objective(z: np.ndarray) -> float:
        try:
            value = _rebuild(traj, unpack(z), pop).dv_total / KM
        except DysonRingError:
            return INFEASIBLE_PENALTY
        return value if math.isfinite(value) else INFEASIBLE_PENALTY

    def mission_slack(z: np.ndarray) -> float:
        x = unpack(z)
        total = x[0]
        for k in range(1, len(x), 5):
            total += x[k]
        return (MISSION_END - total) / DAY

    def flagged(reason: str) -> MothershipTrajectory:
        logger.warning(f"Refinement rejected: {reason}")
        return replace(traj, warnings=traj.warnings + [f"refine: {reason}"])

    try:
        res = minimize(
            objective,
            z0,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * len(z0),
            constraints=[{"type": "ineq", "fun": mission_slack}],
            options={"maxiter": maxiter, "ftol": 1e-10},
        )
        refined = _rebuild(traj, unpack(res.x), pop)
    except (DysonRingError, ValueError, ArithmeticError) as e:
        return flagged(f"solver failure ({e})")

    if trajectory_violations(refined, bounds):
        return flagged("refined trajectory violates bounds")
    if not refined.dv_total < traj.dv_total:
        return traj
    logger.debug(
        f"Refined trajectory dv {traj.dv_total / KM:.4f} -> "
        f"{refined.dv_total / KM:.4f} km/s"
    )
    return refined


def remove_asteroid(
    traj: MothershipTrajectory,
    ast_id: int,
    pop: Population,
    seed: Optional[int] = 0,
    bounds: Optional[LegBounds] = None,
    search: Optional[LegSearch] = None,
) -> MothershipTrajectory:
    """Drop one visit and re-solve the bridging leg with its arrival epoch kept.

    Later activation epochs are unchanged. Raises InfeasibleLegError when the
    bridge cannot be flown.
    """
    ids = traj.asteroid_ids
    if ast_id not in ids:
        raise PreconditionError("Asteroid not in trajectory", ast_id=ast_id)
    k = ids.index(ast_id)
    legs = list(traj.legs)
    if k == len(legs) - 1:
        return MothershipTrajectory(legs[:-1], list(traj.warnings))

    following = legs[k + 1]
    target = pop.get(following.target_ast)
    if k == 0:
        bridge = solve_e2a(
            target, seed=seed, bounds=bounds, search=search, arrival=following.t_arrival
        )
    else:
        previous = pop.get(legs[k - 1].target_ast)
        state0 = kepler_propagate(previous.el, legs[k - 1].t_arrival)
        bridge = solve_a2a(
            state0,
            target,
            seed=seed,
            bounds=bounds,
            search=search,
            arrival=following.t_arrival,
        )
    return MothershipTrajectory(
        legs[:k] + [bridge] + legs[k + 2 :], list(traj.warnings)
    )


def recompute_dv(traj: MothershipTrajectory, pop: Population) -> float:
    """Delta-v ledger recomputed from the stored leg variables."""
    total = 0.0
    previous: Optional[Asteroid] = None
    for leg in traj.legs:
        target = pop.get(leg.target_ast)
        total += evaluate_leg(leg, target, previous).dv_total
        previous = target
    return total


def departure_state_after(
    traj: MothershipTrajectory, pop: Population
) -> Optional[StateVector]:
    """State at the last deployment, where the next leg starts."""
    if not traj.legs:
        return None
    last = traj.legs[-1]
    return kepler_propagate(pop.get(last.target_ast).el, last.t_arrival)


def leg_solver_with(
    bounds: LegBounds, search: LegSearch
) -> Callable[..., ImpulsiveLeg]:
    """solve_a2a bound to fixed settings, for injection into the tree search."""

    def solve(
        state0: StateVector, target: Asteroid, seed: Optional[int]
    ) -> ImpulsiveLeg:
        return solve_a2a(state0, target, seed=seed, bounds=bounds, search=search)

    return solve
