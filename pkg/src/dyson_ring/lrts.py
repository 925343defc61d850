"""Time-sliced beam search over mother-ship asteroid sequences.

Partial trajectories are ranked only against others whose elapsed time falls
in the same slice, so short and long chains compete fairly. Each expansion
screens 2g phasing candidates with a Lambert estimate and runs the full leg
optimization on the best g, so one slice costs at most b*g leg solves.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .astro import StateVector, earth_elements, kepler_propagate
from .batch import BatchRunner
from .constants import ALPHA, AU, DAY, KM, MISSION_END
from .exceptions import PreconditionError
from .legs import (
    ImpulsiveLeg,
    LegBounds,
    LegKind,
    LegSearch,
    MothershipTrajectory,
    departure_state_after,
    lambert_screen,
    solve_a2a,
    solve_e2a,
)
from .population import Asteroid, Population
from .result import Ok

logger = logging.getLogger(__name__)

A2ASolver = Callable[[StateVector, Asteroid, Optional[int]], ImpulsiveLeg]
E2ASolver = Callable[[Asteroid, Optional[int]], ImpulsiveLeg]
Screen = Callable[[LegKind, StateVector, Asteroid], float]

# Trial durations per candidate in the Lambert screen.
SCREEN_TRIALS = 6


@dataclass
class BeamParams:
    b: int = 5
    g: int = 5
    slice_days: float = 91.3125
    a_D: float = 1.3198 * AU
    i_D: float = 0.0
    T_ref_days: float = 200.0
    phasing_weight: float = 0.0
    bounds: LegBounds = field(default_factory=LegBounds)
    search: LegSearch = field(default_factory=LegSearch)

    def __post_init__(self):
        if self.b < 1 or self.g < 1:
            raise PreconditionError(
                "Beam width and fanout must be >= 1", b=self.b, g=self.g
            )
        if self.slice_days <= 0.0:
            raise PreconditionError("Slice length must be positive")

    @property
    def slice_length(self) -> float:
        return self.slice_days * DAY

    def slice_of(self, elapsed: float) -> int:
        return int(math.floor(elapsed / self.slice_length))


@dataclass
class SearchNode:
    trajectory: MothershipTrajectory
    elapsed: float
    j_prime: float
    slice_index: int
    expanded: bool = False

    def sort_key(self) -> Tuple[float, float, int]:
        ids = self.trajectory.asteroid_ids
        return (-self.j_prime, self.elapsed, ids[0] if ids else -1)


@dataclass
class LRTSResult:
    trajectories: List[MothershipTrajectory]
    j_primes: List[float]
    expansions: int = 0
    leg_solves: int = 0
    slices: int = 0

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def best(self) -> Optional[MothershipTrajectory]:
        return self.trajectories[0] if self.trajectories else None


# ----------------------------------------------------------------------------
# Ranking and preselection
# ----------------------------------------------------------------------------


def rank_j_prime(
    traj: MothershipTrajectory,
    a_D: float,
    estimator,
    pop: Population,
    i_D: float = 0.0,
) -> float:
    """M_e / (a_D^2 (1 + dV/50)^2) with kg, AU and km/s.

    M_e sums each visited asteroid's estimated arrival mass at the ring.
    """
    if not traj.legs:
        return 0.0
    m_e = 0.0
    for ast_id in traj.asteroid_ids:
        ast = pop.get(ast_id)
        t_e = estimator.estimate(ast, a_D, i_D)
        m_e += ast.m0 * max(0.0, 1.0 - ALPHA * t_e)
    a_au = a_D / AU
    return m_e / (a_au * a_au * (1.0 + traj.dv_total / KM / 50.0) ** 2)


def _embedding(r: np.ndarray, v: np.ndarray, T_ref: float, weight: float) -> np.ndarray:
    pos = (r + T_ref * v) / T_ref
    if weight == 0.0:
        return pos
    return np.concatenate([pos, weight * v], axis=-1)


def phasing_preselect(
    state0: StateVector,
    candidates: Iterable[Asteroid],
    T_ref: float,
    count: int,
    exclude: Iterable[int] = (),
    weight: float = 0.0,
) -> List[int]:
    """Ids of the ``count`` candidates nearest to ``state0`` in phasing distance.

    Distance is |r_c + T v_c - (r_a + T v_a)| / T with both states at the
    current epoch, optionally extended by ``weight`` times the velocity gap.
    """
    excluded = set(exclude)
    pool = [ast for ast in candidates if ast.id not in excluded]
    if not pool or count <= 0:
        return []
    states = [kepler_propagate(ast.el, state0.t) for ast in pool]
    R = np.array([s.r for s in states])
    V = np.array([s.v for s in states])
    points = _embedding(R, V, T_ref, weight)
    here = _embedding(state0.r, state0.v, T_ref, weight)
    k = min(count, len(pool))
    tree = cKDTree(points)
    _, idx = tree.query(here, k=k)
    idx = np.atleast_1d(idx)
    return [pool[i].id for i in idx]


# ----------------------------------------------------------------------------
# Search
# ----------------------------------------------------------------------------


def _leg_seed(seed: int, ids: Sequence[int], target: int) -> int:
    entropy = [int(seed) % (2**32)] + [int(i) for i in ids] + [int(target)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _default_solvers(params: BeamParams) -> Tuple[E2ASolver, A2ASolver]:
    def e2a(target: Asteroid, seed: Optional[int]) -> ImpulsiveLeg:
        return solve_e2a(target, seed=seed, bounds=params.bounds, search=params.search)

    def a2a(state0: StateVector, target: Asteroid, seed: Optional[int]) -> ImpulsiveLeg:
        return solve_a2a(
            state0, target, seed=seed, bounds=params.bounds, search=params.search
        )

    return e2a, a2a


def _default_screen(params: BeamParams) -> Screen:
    bounds = params.bounds

    def screen(kind: LegKind, start: StateVector, target: Asteroid) -> float:
        T_max = min(bounds.max_duration(kind), MISSION_END - start.t)
        T_min = bounds.min_days * DAY
        if T_max < T_min:
            return math.inf
        durations = np.linspace(T_min, T_max, SCREEN_TRIALS)
        return lambert_screen(kind, start, target, durations)

    return screen


class _Search:
    def __init__(
        self,
        pop: Population,
        params: BeamParams,
        estimator,
        seed: int,
        e2a: E2ASolver,
        a2a: A2ASolver,
        screen: Screen,
        runner: BatchRunner,
        stop_event: Optional[threading.Event],
    ):
        self.pop = pop
        self.params = params
        self.estimator = estimator
        self.seed = seed
        self.e2a = e2a
        self.a2a = a2a
        self.screen = screen
        self.runner = runner
        self.stop_event = stop_event
        self.slices: Dict[int, List[SearchNode]] = {}
        self.created: List[SearchNode] = []
        self.expansions = 0
        self.leg_solves = 0
        self.slices_processed = 0

    def _stopped(self) -> bool:
        return self.stop_event is not None and self.stop_event.is_set()

    def _node(self, traj: MothershipTrajectory) -> SearchNode:
        p = self.params
        j = rank_j_prime(traj, p.a_D, self.estimator, self.pop, p.i_D)
        return SearchNode(traj, traj.elapsed, j, self.params.slice_of(traj.elapsed))

    def _shortlist(
        self, kind: LegKind, start: StateVector, ids: List[int]
    ) -> List[int]:
        """The g preselected candidates with the cheapest screened delta-v."""
        if len(ids) <= self.params.g:
            return ids
        scores = [self.screen(kind, start, self.pop.get(i)) for i in ids]
        order = sorted(range(len(ids)), key=lambda k: scores[k])
        return [ids[k] for k in order[: self.params.g]]

    def _insert(self, children: List[SearchNode], earliest: int = 0) -> None:
        """Keep the best g children; those arriving before ``earliest`` wait there."""
        children.sort(key=SearchNode.sort_key)
        for child in children[: self.params.g]:
            bucket = max(child.slice_index, earliest)
            self.slices.setdefault(bucket, []).append(child)
            self.created.append(child)
            self.expansions += 1

    def expand_root(self) -> None:
        p = self.params
        t_launch = p.bounds.launch_window[0]
        earth = kepler_propagate(earth_elements(), t_launch)
        ids = phasing_preselect(
            earth, self.pop, p.T_ref_days * DAY, 2 * p.g, weight=p.phasing_weight
        )
        ids = self._shortlist(LegKind.E2A, earth, ids)
        jobs = [(self.pop.get(i), _leg_seed(self.seed, [], i)) for i in ids]
        results = self.runner.map(lambda job: self.e2a(*job), jobs)
        self.leg_solves += len(jobs)
        children = [
            self._node(MothershipTrajectory([r.value]))
            for r in results
            if isinstance(r, Ok)
        ]
        self._insert(children)
        self.slices_processed += 1

    def _children_jobs(
        self, node: SearchNode
    ) -> List[Tuple[SearchNode, StateVector, Asteroid, int]]:
        p = self.params
        state0 = departure_state_after(node.trajectory, self.pop)
        if state0 is None or state0.t + p.bounds.min_days * DAY > MISSION_END:
            return []
        visited = node.trajectory.asteroid_ids
        ids = phasing_preselect(
            state0,
            self.pop,
            p.T_ref_days * DAY,
            2 * p.g,
            exclude=visited,
            weight=p.phasing_weight,
        )
        ids = self._shortlist(LegKind.A2A, state0, ids)
        return [
            (node, state0, self.pop.get(i), _leg_seed(self.seed, visited, i))
            for i in ids
        ]

    def process_slice(self, s: int) -> None:
        """Expand the top-b nodes of slice ``s`` once.

        Children that arrive within slice ``s`` are queued for slice s+1, so a
        slice never costs more than b*g leg solves.
        """
        self.slices_processed += 1
        ranked = sorted(self.slices.get(s, []), key=SearchNode.sort_key)
        beam = ranked[: self.params.b]
        jobs = []
        for node in beam:
            node.expanded = True
            jobs.extend(self._children_jobs(node))
        results = self.runner.map(lambda job: self.a2a(job[1], job[2], job[3]), jobs)
        self.leg_solves += len(jobs)
        per_parent: Dict[int, List[SearchNode]] = {}
        for job, result in zip(jobs, results):
            if not isinstance(result, Ok):
                continue
            leg = result.value
            if leg.t_arrival > MISSION_END:
                continue
            child = self._node(job[0].trajectory.extended(leg))
            per_parent.setdefault(id(job[0]), []).append(child)
        for node in beam:
            self._insert(per_parent.get(id(node), []), earliest=s + 1)

    def run(self) -> None:
        self.expand_root()
        s = 0
        while not self._stopped():
            pending = [k for k in self.slices if k >= s]
            if not pending:
                break
            s = min(pending)
            self.process_slice(s)
            s += 1


def lrts_run(
    pop: Optional[Population],
    params: BeamParams,
    estimator,
    seed: int = 0,
    e2a_solver: Optional[E2ASolver] = None,
    a2a_solver: Optional[A2ASolver] = None,
    screen_solver: Optional[Screen] = None,
    runner: Optional[BatchRunner] = None,
    stop_event: Optional[threading.Event] = None,
) -> LRTSResult:
    """Run the search and return every generated trajectory, best J' first.

    ``expansions`` counts inserted children and ``leg_solves`` counts leg
    optimizations; both are at most b*g per processed slice.
    """
    if pop is None or len(pop) == 0:
        return LRTSResult([], [])
    default_e2a, default_a2a = _default_solvers(params)
    search = _Search(
        pop,
        params,
        estimator,
        seed,
        e2a_solver or default_e2a,
        a2a_solver or default_a2a,
        screen_solver or _default_screen(params),
        runner or BatchRunner(),
        stop_event,
    )
    search.run()
    ranked = sorted(search.created, key=SearchNode.sort_key)
    logger.info(
        f"LRTS seed={seed}: {len(ranked)} trajectories, "
        f"{search.expansions} expansions, "
        f"{search.leg_solves} leg solves over {search.slices_processed} slices"
    )
    return LRTSResult(
        [n.trajectory for n in ranked],
        [n.j_prime for n in ranked],
        search.expansions,
        search.leg_solves,
        search.slices_processed,
    )


def lrts_pool(
    pop: Population,
    params: BeamParams,
    estimator,
    seeds: Sequence[int],
    **kwargs,
) -> LRTSResult:
    """Pool several independent runs, dropping duplicate visiting sequences."""
    pooled: List[Tuple[float, MothershipTrajectory]] = []
    seen: Set[Tuple[int, ...]] = set()
    expansions = leg_solves = slices = 0
    for seed in seeds:
        result = lrts_run(pop, params, estimator, seed=seed, **kwargs)
        expansions += result.expansions
        leg_solves += result.leg_solves
        slices += result.slices
        for traj, j in zip(result.trajectories, result.j_primes):
            key = tuple(traj.asteroid_ids)
            if key not in seen:
                seen.add(key)
                pooled.append((j, traj))
    pooled.sort(key=lambda item: -item[0])
    return LRTSResult(
        [t for _, t in pooled], [j for j, _ in pooled], expansions, leg_solves, slices
    )
