"""Ring parameter search and the optimally-phased transfer matrix."""

import functools
import logging
import math
from bisect import insort
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import cma
import numpy as np

from .astro import RingConfig, synodic_period
from .batch import BatchRunner
from .cache import SolutionCache
from .constants import ALPHA, DAY, MISSION_END, STATIONS
from .exceptions import (
    DysonRingError,
    InfiniteSynodicError,
    NoFeasibleRingError,
    PreconditionError,
    ValidationError,
)
from .legs import MothershipTrajectory
from .lowthrust import Costates, OcpOptions, TransferSolution, solve_rendezvous
from .population import Asteroid, Population
from .result import Ok

logger = logging.getLogger(__name__)

RAAN_MAX = 2.0 * math.pi


@dataclass(frozen=True)
class ActivatedAsteroid:
    asteroid: Asteroid
    t_act: float


def activations_from_ensemble(
    trajectories: Sequence[MothershipTrajectory], pop: Population
) -> List[ActivatedAsteroid]:
    """Every asteroid visited by the ensemble with its activation epoch."""
    return [
        ActivatedAsteroid(pop.get(leg.target_ast), leg.t_arrival)
        for traj in trajectories
        for leg in traj.legs
    ]


# ----------------------------------------------------------------------------
# Ring parameters
# ----------------------------------------------------------------------------


def ring_objective(
    A: Sequence[ActivatedAsteroid],
    ring: RingConfig,
    dv_factor: float,
    estimator,
    t_f: float = MISSION_END,
) -> float:
    """Deliverable mass of the feasible asteroids over a_D^2 * dv_factor.

    An asteroid counts when it can reach the ring before ``t_f`` with some
    mass left. Mass in kg, a_D in AU.
    """
    total = 0.0
    for item in A:
        t_e = estimator.estimate_for_ring(item.asteroid, ring)
        mass = item.asteroid.m0 * (1.0 - ALPHA * t_e)
        if item.t_act + t_e < t_f and mass > 0.0:
            total += mass
    return total / (ring.radius_au**2 * dv_factor)


def _ring_from_unit(x: Sequence[float]) -> RingConfig:
    u = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    a_D = RingConfig.A_MIN + u[0] * (RingConfig.A_MAX - RingConfig.A_MIN)
    return RingConfig(
        a_D=float(a_D), i_D=float(u[1] * math.pi), raan_D=float(u[2] * RAAN_MAX)
    )


def optimize_ring_parameters(
    A: Sequence[ActivatedAsteroid],
    dv_factor: float,
    estimator,
    seed: int = 0,
    popsize: int = 16,
    maxiter: int = 200,
    sigma0: float = 0.3,
    t_f: float = MISSION_END,
) -> RingConfig:
    """CMA-ES over (a_D, i_D, RAAN_D) maximizing :func:`ring_objective`.

    The search runs on the unit cube; the initial mean is the cube centre.

    Raises:
        NoFeasibleRingError: No sampled configuration has a feasible asteroid.
    """
    if not A:
        raise PreconditionError("Ring optimization needs at least one asteroid")
    if dv_factor <= 0.0:
        raise PreconditionError("dv_factor must be positive", dv_factor=dv_factor)

    es = cma.CMAEvolutionStrategy(
        3 * [0.5],
        sigma0,
        {
            "bounds": [0.0, 1.0],
            "popsize": popsize,
            "maxiter": maxiter,
            # pycma treats seed 0 as "seed from the clock"
            "seed": int(seed) + 1,
            "verbose": -9,
            "verb_log": 0,
            "verb_disp": 0,
        },
    )
    best_ring: Optional[RingConfig] = None
    best_value = 0.0
    generation = 0
    while not es.stop():
        X = es.ask()
        fitness = []
        for x in X:
            ring = _ring_from_unit(x)
            value = ring_objective(A, ring, dv_factor, estimator, t_f)
            if value > best_value:
                best_ring, best_value = ring, value
            fitness.append(-value)
        es.tell(X, fitness)
        generation += 1
        logger.debug(f"CMA-ES generation {generation}: best J_bar={best_value:.6g}")

    if best_ring is None:
        raise NoFeasibleRingError(
            f"No feasible asteroid among {len(A)} at any sampled ring configuration"
        )
    logger.info(
        f"Ring parameters: a_D={best_ring.radius_au:.4f} AU, "
        f"i_D={math.degrees(best_ring.i_D):.3f} deg, "
        f"RAAN_D={math.degrees(best_ring.raan_D):.3f} deg (J_bar={best_value:.6g}, "
        f"{generation} generations)"
    )
    return best_ring


# ----------------------------------------------------------------------------
# Transfer matrix
# ----------------------------------------------------------------------------


@dataclass(order=True)
class Opportunity:
    """Arrival epoch ``t_k`` delivering ``m_k`` kg, with its transfer if known."""

    t_k: float
    m_k: float = field(compare=False)
    solution: Optional[TransferSolution] = field(default=None, compare=False)

    def to_dict(self) -> Dict:
        return {
            "t_k": self.t_k,
            "m_k": self.m_k,
            "solution": None if self.solution is None else self.solution.to_record(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Opportunity":
        sol = data.get("solution")
        return cls(
            float(data["t_k"]),
            float(data["m_k"]),
            None if sol is None else TransferSolution.from_record(sol),
        )


class TransferMatrix:
    """Per asteroid, twelve time-sorted lists of transfer opportunities."""

    def __init__(self, asteroid_ids: Sequence[int] = (), t_f: float = MISSION_END):
        self.t_f = t_f
        self.rows: Dict[int, List[List[Opportunity]]] = {}
        for ast_id in asteroid_ids:
            self.add_row(ast_id)

    def add_row(self, ast_id: int) -> List[List[Opportunity]]:
        return self.rows.setdefault(ast_id, [[] for _ in range(STATIONS)])

    def add(self, ast_id: int, j: int, opp: Opportunity) -> None:
        if not 1 <= j <= STATIONS:
            raise ValidationError("Station index must lie in 1..12", j=j)
        if opp.t_k > self.t_f:
            raise ValidationError("Opportunity arrives after mission end", t_k=opp.t_k)
        if opp.m_k < 0.0:
            raise ValidationError("Opportunity mass is negative", m_k=opp.m_k)
        insort(self.add_row(ast_id)[j - 1], opp)

    def entries(self, ast_id: int, j: int) -> List[Opportunity]:
        row = self.rows.get(ast_id)
        return [] if row is None else row[j - 1]

    @property
    def asteroid_ids(self) -> List[int]:
        return list(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[Tuple[int, int, Opportunity]]:
        for ast_id, row in self.rows.items():
            for j, cell in enumerate(row, start=1):
                for opp in cell:
                    yield ast_id, j, opp

    @property
    def opportunity_count(self) -> int:
        return sum(1 for _ in self)

    def empty_rows(self) -> List[int]:
        return [a for a, row in self.rows.items() if not any(row)]

    def to_dict(self) -> Dict:
        return {
            "t_f": self.t_f,
            "asteroid_ids": self.asteroid_ids,
            "opportunities": [
                {"ast_id": a, "station": j, **opp.to_dict()} for a, j, opp in self
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TransferMatrix":
        M = cls(data.get("asteroid_ids", []), float(data.get("t_f", MISSION_END)))
        for rec in data.get("opportunities", []):
            M.add(int(rec["ast_id"]), int(rec["station"]), Opportunity.from_dict(rec))
        return M


def station_offset(ast: Asteroid, ring: RingConfig, j: int, T_syn: float) -> float:
    """Shift of station ``j``'s opportunity family relative to station 1.

    Station j leads station 1 by (j-1)*30 deg, so when the ring outruns the
    asteroid its geometry recurs (j-1)*T_syn/12 earlier, and later otherwise.
    """
    sign = 1.0 if ring.mean_motion > ast.el.mean_motion else -1.0
    return -sign * (j - 1) * T_syn / STATIONS


def _solve(
    cache: Optional[SolutionCache],
    ast: Asteroid,
    ring: RingConfig,
    j: int,
    t_act: float,
    window: Tuple[float, float],
    guess: Optional[Costates],
    options: OcpOptions,
    t_guess: Optional[float],
) -> TransferSolution:
    def compute() -> TransferSolution:
        return solve_rendezvous(ast, ring, j, t_act, window, guess, options, t_guess)

    if cache is None:
        return compute()
    key = cache.make_key(
        "rendezvous", ast, ring, j, t_act, window, guess, options, t_guess
    )
    return cache.get_or_compute(key, compute)


def transfer_row(
    item: ActivatedAsteroid,
    ring: RingConfig,
    estimator,
    t_f: float = MISSION_END,
    epsilon: float = 20.0 * DAY,
    delta: float = 1.5,
    options: Optional[OcpOptions] = None,
    cache: Optional[SolutionCache] = None,
    dedupe: float = 1.0 * DAY,
) -> List[List[Opportunity]]:
    """All converged opportunities of one asteroid to the twelve stations.

    The first transfer goes to station 1 with arrival in
    [t_act, t_act + delta * T_e]. Every other opportunity is searched in a
    +-epsilon bracket around t_act plus that flight time, shifted by whole
    synodic periods plus the station offset, warm-started from the last
    converged solve.
    """
    options = options or OcpOptions()
    ast, t_act = item.asteroid, item.t_act
    row: List[List[Opportunity]] = [[] for _ in range(STATIONS)]
    if t_act >= t_f:
        logger.warning(f"Asteroid {ast.id} activates after the arrival horizon")
        return row

    T_e = estimator.estimate_for_ring(ast, ring)
    hi = min(t_act + max(delta * T_e, 2.0 * epsilon), t_f)
    try:
        first = _solve(cache, ast, ring, 1, t_act, (t_act, hi), None, options, T_e)
    except DysonRingError as e:
        logger.warning(f"First transfer of asteroid {ast.id} failed: {e}")
        return row
    if not first.converged:
        logger.warning(f"No first transfer for asteroid {ast.id}; row left empty")
        return row

    def keep(j: int, sol: TransferSolution) -> bool:
        if not sol.converged or sol.tf > t_f or sol.m_arr <= 0.0:
            return False
        cell = row[j - 1]
        if any(abs(o.t_k - sol.tf) < dedupe for o in cell):
            return False
        cell.append(Opportunity(sol.tf, sol.m_arr, sol))
        return True

    keep(1, first)
    try:
        T_syn = synodic_period(ast.el, ring)
    except InfiniteSynodicError as e:
        logger.warning(f"Asteroid {ast.id}: {e}; keeping the first transfer only")
        return row

    earliest = t_act + 0.5 * first.T
    for j in range(1, STATIONS + 1):
        base = t_act + first.T + station_offset(ast, ring, j, T_syn)
        k_lo = math.ceil((earliest - epsilon - base) / T_syn)
        k_hi = math.floor((t_f + epsilon - base) / T_syn)
        warm = first
        for k in range(k_lo, k_hi + 1):
            if j == 1 and k == 0:
                continue
            centre = base + k * T_syn
            window = (max(centre - epsilon, t_act), min(centre + epsilon, t_f))
            if window[1] - window[0] < DAY:
                continue
            try:
                sol = _solve(
                    cache, ast, ring, j, t_act, window, warm.costates0, options, warm.T
                )
            except DysonRingError as e:
                logger.debug(f"Bracket ast={ast.id} j={j} k={k} skipped: {e}")
                continue
            if keep(j, sol):
                warm = sol

    for cell in row:
        cell.sort()
    return row


def build_transfer_matrix(
    A: Sequence[ActivatedAsteroid],
    ring: RingConfig,
    estimator,
    t_f: float = MISSION_END,
    epsilon: float = 20.0 * DAY,
    delta: float = 1.5,
    options: Optional[OcpOptions] = None,
    runner: Optional[BatchRunner] = None,
    cache: Optional[SolutionCache] = None,
) -> TransferMatrix:
    """Collect optimally-phased opportunities for every asteroid in ``A``.

    Rows are computed independently, one batch item per asteroid. Asteroids
    whose row fails entirely keep an empty row.
    """
    if delta <= 1.0:
        raise PreconditionError("Bracket slack delta must exceed 1", delta=delta)
    if epsilon <= 0.0:
        raise PreconditionError("Bracket half-width must be positive", epsilon=epsilon)
    runner = runner or BatchRunner()
    row_of = functools.partial(
        transfer_row,
        ring=ring,
        estimator=estimator,
        t_f=t_f,
        epsilon=epsilon,
        delta=delta,
        options=options,
        cache=cache,
    )
    M = TransferMatrix([item.asteroid.id for item in A], t_f)
    for item, result in zip(A, runner.map(row_of, A)):
        if not isinstance(result, Ok):
            logger.warning(f"Transfer row of asteroid {item.asteroid.id} failed")
            continue
        for j, cell in enumerate(result.value, start=1):
            for opp in cell:
                M.add(item.asteroid.id, j, opp)

    empty = M.empty_rows()
    logger.info(
        f"Transfer matrix: {M.opportunity_count} opportunities for {len(M)} asteroids "
        f"({len(empty)} empty rows)"
    )
    return M
