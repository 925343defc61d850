"""Station construction windows and asteroid-to-station assignment.

Only one station receives asteroids at a time, so each station owns a
construction window and consecutive windows are at least 90 days apart. The
assignment maximizes the smallest station mass: a greedy chronological sweep
bootstraps it, alternating-path moves refine it, and an island-model
differential evolution searches the windows around both.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .constants import DAY, M_MAX, STATIONS
from .exceptions import PreconditionError, ValidationError
from .jde import JDEPopulation
from .ring import Opportunity, TransferMatrix

logger = logging.getLogger(__name__)

STATION_GAP = 90.0 * DAY
ALL_STATIONS: Tuple[int, ...] = tuple(range(1, STATIONS + 1))

Window = Tuple[float, float]
FilteredMatrix = Dict[Tuple[int, int], Opportunity]


@dataclass
class WindowAllocation:
    """One construction window (begin, end) per station, indexed by station - 1."""

    windows: List[Window]

    def __post_init__(self):
        if len(self.windows) != STATIONS:
            raise ValidationError(
                "Window allocation needs one window per station",
                count=len(self.windows),
            )
        self.windows = [(float(b), float(e)) for b, e in self.windows]

    @property
    def order(self) -> List[int]:
        """Stations in temporal order of their windows."""
        return sorted(ALL_STATIONS, key=lambda j: (*self.windows[j - 1], j))

    def window(self, j: int) -> Window:
        return self.windows[j - 1]

    def contains(self, j: int, t: float) -> bool:
        begin, end = self.windows[j - 1]
        return begin <= t <= end

    def violations(self, gap: float = STATION_GAP) -> List[str]:
        problems = []
        for j in ALL_STATIONS:
            begin, end = self.window(j)
            if begin > end:
                problems.append(f"station {j}: window begins after it ends")
        order = self.order
        for prev, nxt in zip(order, order[1:]):
            prev_end = self.window(prev)[1]
            nxt_begin = self.window(nxt)[0]
            if nxt_begin < prev_end:
                problems.append(f"stations {prev} and {nxt}: windows overlap")
            elif nxt_begin - prev_end < gap - 1e-6:
                gap_days = (nxt_begin - prev_end) / DAY
                problems.append(
                    f"stations {prev} and {nxt}: gap of {gap_days:.2f} days"
                )
        return problems

    def is_valid(self, gap: float = STATION_GAP) -> bool:
        return not self.violations(gap)

    def validate(self, gap: float = STATION_GAP) -> None:
        problems = self.violations(gap)
        if problems:
            raise ValidationError(
                "Invalid window allocation",
                violations=problems[:5],
                count=len(problems),
            )

    @classmethod
    def uniform(
        cls,
        t_start: float,
        t_end: float,
        order: Optional[Sequence[int]] = None,
        gap: float = STATION_GAP,
    ) -> "WindowAllocation":
        """Equal-length windows tiling [t_start, t_end] in ``order``."""
        order = list(order) if order is not None else list(ALL_STATIONS)
        windows: List[Window] = [(0.0, 0.0)] * STATIONS
        for j, window in zip(order, _tile(t_start, t_end, len(order), gap)):
            windows[j - 1] = window
        return cls(windows)

    @classmethod
    def complete(
        cls,
        fixed: Dict[int, Window],
        t_start: float,
        t_end: float,
        gap: float = STATION_GAP,
    ) -> "WindowAllocation":
        """Keep ``fixed`` windows and tile the remaining stations after them."""
        missing = [j for j in ALL_STATIONS if j not in fixed]
        after = max((w[1] + gap for w in fixed.values()), default=t_start)
        windows = [fixed.get(j, (0.0, 0.0)) for j in ALL_STATIONS]
        for j, window in zip(missing, _tile(after, t_end, len(missing), gap)):
            windows[j - 1] = window
        return cls(windows)

    def to_dict(self) -> Dict:
        return {
            "windows": [list(w) for w in self.windows],
            "order": self.order,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "WindowAllocation":
        return cls([tuple(w) for w in data["windows"]])


def _tile(t_start: float, t_end: float, n: int, gap: float) -> List[Window]:
    if n == 0:
        return []
    length = max(0.0, (t_end - t_start - (n - 1) * gap) / n)
    out = []
    t = t_start
    for _ in range(n):
        out.append((t, t + length))
        t += length + gap
    return out


@dataclass
class Schedule:
    """Windows plus the asteroid -> (station, opportunity) assignment."""

    allocation: WindowAllocation
    assignment: Dict[int, Tuple[int, Opportunity]]
    stations: Tuple[int, ...] = ALL_STATIONS
    partial: bool = False
    history: List[float] = field(default_factory=list)

    @property
    def station_masses(self) -> Dict[int, float]:
        masses = {j: 0.0 for j in self.stations}
        for j, opp in self.assignment.values():
            masses[j] = masses.get(j, 0.0) + opp.m_k
        return masses

    @property
    def M_min(self) -> float:
        masses = self.station_masses
        return min(masses.values()) if masses else 0.0

    @property
    def constructed(self) -> int:
        return sum(1 for m in self.station_masses.values() if m > 0.0)

    def asteroids_of(self, j: int) -> List[int]:
        return sorted(a for a, (s, _) in self.assignment.items() if s == j)

    def violations(self, gap: float = STATION_GAP) -> List[str]:
        problems = self.allocation.violations(gap)
        for a, (j, opp) in sorted(self.assignment.items()):
            if j not in self.stations:
                problems.append(f"asteroid {a}: unknown station {j}")
            elif not self.allocation.contains(j, opp.t_k):
                problems.append(f"asteroid {a}: arrival outside station {j} window")
        return problems

    def to_dict(self) -> Dict:
        return {
            "allocation": self.allocation.to_dict(),
            "stations": list(self.stations),
            "partial": self.partial,
            "M_min": self.M_min,
            "station_masses": {str(j): m for j, m in self.station_masses.items()},
            "assignment": [
                {"ast_id": a, "station": j, **opp.to_dict()}
                for a, (j, opp) in sorted(self.assignment.items())
            ],
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Schedule":
        assignment = {
            int(rec["ast_id"]): (int(rec["station"]), Opportunity.from_dict(rec))
            for rec in data["assignment"]
        }
        return cls(
            WindowAllocation.from_dict(data["allocation"]),
            assignment,
            tuple(data.get("stations", ALL_STATIONS)),
            bool(data.get("partial", False)),
            [float(x) for x in data.get("history", [])],
        )


# ----------------------------------------------------------------------------
# Window filtering
# ----------------------------------------------------------------------------


def filter_matrix(
    M: TransferMatrix, W: WindowAllocation, stations: Iterable[int] = ALL_STATIONS
) -> FilteredMatrix:
    """Heaviest in-window opportunity per (asteroid, station); earliest on ties."""
    out: FilteredMatrix = {}
    stations = tuple(stations)
    for ast_id in M.asteroid_ids:
        for j in stations:
            best: Optional[Opportunity] = None
            for opp in M.entries(ast_id, j):
                if W.contains(j, opp.t_k) and (best is None or opp.m_k > best.m_k):
                    best = opp
            if best is not None:
                out[(ast_id, j)] = best
    return out


# ----------------------------------------------------------------------------
# Greedy scheduling
# ----------------------------------------------------------------------------


def greedy_schedule(
    M: TransferMatrix,
    m_target: float,
    t_start: float = 0.0,
    gap: float = STATION_GAP,
) -> Schedule:
    """Chronological sweep building one station at a time.

    Arrivals accumulate on every unbuilt station; the first station whose
    mass exceeds ``m_target`` is built from its accumulated asteroids, its
    window spans their arrivals, the other accumulators restart empty and the
    sweep resumes ``gap`` after the window closes.
    """
    events = sorted(
        ((opp.t_k, a, j, opp) for a, j, opp in M),
        key=lambda e: (e[0], e[1], e[2]),
    )
    built: Dict[int, Window] = {}
    fixed: Dict[int, Tuple[int, Opportunity]] = {}
    pending: Dict[int, Dict[int, Opportunity]] = {j: {} for j in ALL_STATIONS}
    mass = {j: 0.0 for j in ALL_STATIONS}
    now = t_start

    for t, a, j, opp in events:
        if t < now or j in built or a in fixed or a in pending[j]:
            continue
        now = t
        pending[j][a] = opp
        mass[j] += opp.m_k
        if mass[j] > m_target:
            arrivals = [o.t_k for o in pending[j].values()]
            built[j] = (min(arrivals), max(arrivals))
            for ast_id, o in pending[j].items():
                fixed[ast_id] = (j, o)
            for l in ALL_STATIONS:
                if l not in built:
                    pending[l] = {}
                    mass[l] = 0.0
            now = built[j][1] + gap
            logger.debug(
                f"Greedy: station {j} built with {len(pending[j])} asteroids "
                f"({mass[j]:.4g} kg)"
            )
            if len(built) == STATIONS:
                break

    allocation = WindowAllocation.complete(built, t_start, M.t_f, gap)
    partial = len(built) < STATIONS
    return Schedule(allocation, fixed, partial=partial)


def greedy_escalation(
    M: TransferMatrix,
    m_start: float = 9.0 * M_MAX,
    m_step: float = 0.05 * M_MAX,
    t_start: float = 0.0,
    gap: float = STATION_GAP,
) -> Tuple[Schedule, float]:
    """Best complete greedy schedule over targets ``m_start + k * m_step``.

    Targets run over every grid point in (0, total / 12], the largest at which
    twelve stations could still be built. Returns the complete schedule with
    the largest M_min (the larger target on ties) and its target; when no
    target completes, the schedule at the smallest target is returned.
    """
    if m_step <= 0.0:
        raise PreconditionError("Escalation step must be positive", m_step=m_step)
    best_per_ast: Dict[int, float] = {}
    for a, _, opp in M:
        best_per_ast[a] = max(best_per_ast.get(a, 0.0), opp.m_k)
    ceiling = sum(best_per_ast.values()) / STATIONS
    k_lo = math.floor(-m_start / m_step) + 1
    k_hi = math.floor((ceiling - m_start) / m_step)

    best: Optional[Tuple[Schedule, float]] = None
    fallback: Optional[Tuple[Schedule, float]] = None
    for k in range(k_hi, k_lo - 1, -1):
        target = m_start + k * m_step
        sched = greedy_schedule(M, target, t_start, gap)
        fallback = (sched, target)
        if not sched.partial and (best is None or sched.M_min > best[0].M_min):
            best = (sched, target)

    if best is not None:
        logger.info(
            f"Greedy escalation: target {best[1] / M_MAX:.3f} m_max, "
            f"M_min {best[0].M_min / M_MAX:.3f} m_max"
        )
        return best
    if fallback is None:
        target = max(m_start, m_step)
        fallback = (greedy_schedule(M, target, t_start, gap), target)
    logger.warning("Greedy escalation found no complete schedule")
    return fallback


# ----------------------------------------------------------------------------
# Assignment graph and path-based refinement
# ----------------------------------------------------------------------------

Move = Tuple[int, int, Optional[int]]


class AssignmentGraph:
    """Bipartite asteroid-station graph over an in-window filtered matrix.

    ``matched`` maps asteroid -> station, so every asteroid has at most one
    matched edge.
    """

    def __init__(self, M_prime: FilteredMatrix, stations: Sequence[int]):
        self.stations = tuple(stations)
        self.edges = {
            key: opp
            for key, opp in M_prime.items()
            if key[1] in self.stations and opp.m_k > 0.0
        }
        self.by_station: Dict[int, List[int]] = {j: [] for j in self.stations}
        for a, j in sorted(self.edges):
            self.by_station[j].append(a)
        self.matched: Dict[int, int] = {}
        self.masses = {j: 0.0 for j in self.stations}

    def weight(self, a: int, j: int) -> float:
        return self.edges[(a, j)].m_k

    def match(self, a: int, j: int) -> None:
        if (a, j) not in self.edges:
            raise ValidationError(
                "Assignment uses a transfer outside the windows", ast_id=a, station=j
            )
        if a in self.matched:
            raise ValidationError("Asteroid assigned twice", ast_id=a)
        self.matched[a] = j
        self.masses[j] += self.weight(a, j)

    def sorted_masses(self, moves: Sequence[Move] = ()) -> Tuple[float, ...]:
        masses = dict(self.masses)
        for a, to, frm in moves:
            masses[to] += self.weight(a, to)
            if frm is not None:
                masses[frm] -= self.weight(a, frm)
        return tuple(sorted(masses.values()))

    def paths(self, s: int, k: int) -> List[List[Move]]:
        """Simple alternating paths of at most ``k`` edges starting at ``s``.

        A path enters an asteroid over an unmatched edge; if that asteroid is
        matched, the path continues to its station over the matched edge. A
        path may close on ``s`` itself, which swaps asteroids around a cycle.
        """
        found: List[List[Move]] = []

        def extend(
            cur: int, moves: List[Move], seen: Set[int], used: Set[int], n: int
        ) -> None:
            for a in self.by_station[cur]:
                if a in used or self.matched.get(a) == cur:
                    continue
                src = self.matched.get(a)
                if src is None:
                    if n + 1 <= k:
                        found.append(moves + [(a, cur, None)])
                    continue
                if n + 2 > k:
                    continue
                if src == s:
                    found.append(moves + [(a, cur, src)])
                    continue
                if src in seen:
                    continue
                path = moves + [(a, cur, src)]
                found.append(path)
                extend(src, path, seen | {src}, used | {a}, n + 2)

        extend(s, [], {s}, set(), 0)
        return found

    def apply(self, moves: Sequence[Move]) -> None:
        for a, to, frm in moves:
            if frm is not None:
                self.masses[frm] -= self.weight(a, frm)
            self.matched[a] = to
            self.masses[to] += self.weight(a, to)
        self.check()

    def check(self) -> None:
        """Recompute station masses from the matching and compare."""
        recomputed = {j: 0.0 for j in self.stations}
        for a, j in self.matched.items():
            if (a, j) not in self.edges:
                raise ValidationError("Matched edge missing from graph", ast_id=a)
            recomputed[j] += self.weight(a, j)
        scale = max(1.0, sum(recomputed.values()))
        for j in self.stations:
            if abs(recomputed[j] - self.masses[j]) > 1e-9 * scale:
                raise ValidationError("Station mass out of sync", station=j)
        self.masses = recomputed

    def assignment(self) -> Dict[int, Tuple[int, Opportunity]]:
        return {a: (j, self.edges[(a, j)]) for a, j in self.matched.items()}


def _improves(new: Sequence[float], old: Sequence[float], tol: float) -> bool:
    for x, y in zip(new, old):
        if abs(x - y) > tol:
            return x > y
    return False


def path_refine(
    M: TransferMatrix,
    W: WindowAllocation,
    k: int,
    init: Union[Schedule, Dict[int, int]],
    stations: Sequence[int] = ALL_STATIONS,
    max_iter: int = 10000,
) -> Schedule:
    """Improve an assignment by alternating-path moves of at most ``k`` edges.

    Each iteration enumerates paths from every station, lowest mass first,
    and applies the one whose sorted station masses are lexicographically
    largest, provided they beat the current ones. M_min therefore never
    decreases. ``k = 1`` only adds free asteroids; ``k <= 0`` returns ``init``
    unchanged.

    Raises:
        ValidationError: ``init`` assigns an asteroid over a transfer that is
            not available inside the windows.
    """
    stations = tuple(stations)
    if isinstance(init, Schedule):
        stations = init.stations
        pairs = {a: j for a, (j, _) in init.assignment.items()}
    else:
        pairs = dict(init)

    graph = AssignmentGraph(filter_matrix(M, W, stations), stations)
    for a, j in sorted(pairs.items()):
        graph.match(a, j)
    if k <= 0:
        if isinstance(init, Schedule):
            return init
        return Schedule(W, graph.assignment(), stations)

    tol = 1e-12 * max(1.0, sum(opp.m_k for opp in graph.edges.values()))
    iterations = 0
    while iterations < max_iter:
        current = graph.sorted_masses()
        best_moves: Optional[List[Move]] = None
        best_key = current
        for s in sorted(stations, key=lambda j: (graph.masses[j], j)):
            for moves in graph.paths(s, k):
                key = graph.sorted_masses(moves)
                if _improves(key, best_key, tol):
                    best_moves, best_key = moves, key
        if best_moves is None:
            break
        m_min_before = current[0]
        graph.apply(best_moves)
        iterations += 1
        if graph.sorted_masses()[0] < m_min_before - tol:
            raise ValidationError("Path refinement decreased M_min")

    logger.debug(f"Path refinement k={k}: {iterations} paths applied")
    return Schedule(W, graph.assignment(), stations)


def greedy_assignment(
    M: TransferMatrix,
    W: WindowAllocation,
    target: Optional[float] = None,
    stations: Sequence[int] = ALL_STATIONS,
) -> Schedule:
    """Chronological greedy sweep restricted to the windows of ``W``.

    In-window arrivals are taken earliest first. An asteroid joins the station
    of its arrival unless that station already exceeds ``target`` (default:
    the total in-window mass over the station count). Asteroids left over
    stay unassigned.
    """
    stations = tuple(stations)
    M_prime = filter_matrix(M, W, stations)
    events = sorted(
        (opp.t_k, a, j, opp) for (a, j), opp in M_prime.items() if opp.m_k > 0.0
    )
    if target is None:
        best_mass: Dict[int, float] = {}
        for _, a, _, opp in events:
            best_mass[a] = max(best_mass.get(a, 0.0), opp.m_k)
        target = sum(best_mass.values()) / len(stations)

    masses = {j: 0.0 for j in stations}
    assignment: Dict[int, Tuple[int, Opportunity]] = {}
    for _, a, j, opp in events:
        if a in assignment or masses[j] > target:
            continue
        assignment[a] = (j, opp)
        masses[j] += opp.m_k
    return Schedule(W, assignment, stations)


def evaluate_windows(
    M: TransferMatrix,
    W: WindowAllocation,
    k: int = 2,
    stations: Sequence[int] = ALL_STATIONS,
) -> Schedule:
    """Greedy bootstrap inside ``W`` followed by path refinement."""
    init = greedy_assignment(M, W, stations=stations)
    return path_refine(M, W, k, init, stations)


# ----------------------------------------------------------------------------
# Outer window optimization
# ----------------------------------------------------------------------------


def encode_windows(W: WindowAllocation) -> np.ndarray:
    """[order keys (12), begins (12), lengths (12)]."""
    keys = np.zeros(STATIONS)
    for rank, j in enumerate(W.order):
        keys[j - 1] = (rank + 0.5) / STATIONS
    begins = np.array([w[0] for w in W.windows])
    lengths = np.array([w[1] - w[0] for w in W.windows])
    return np.concatenate([keys, begins, lengths])


def decode_windows(
    x: Sequence[float], t_end: float, gap: float = STATION_GAP
) -> Optional[WindowAllocation]:
    """Windows in key order, each shifted right until it clears its predecessor.

    Returns ``None`` when a shifted window would begin after ``t_end``.
    """
    x = np.asarray(x, dtype=float)
    keys, begins, lengths = x[:STATIONS], x[STATIONS : 2 * STATIONS], x[2 * STATIONS :]
    order = sorted(range(STATIONS), key=lambda j: (keys[j], j))
    windows: List[Window] = [(0.0, 0.0)] * STATIONS
    prev_end: Optional[float] = None
    for j in order:
        begin = begins[j] if prev_end is None else max(begins[j], prev_end + gap)
        if begin > t_end:
            return None
        end = begin + max(0.0, lengths[j])
        windows[j] = (float(begin), float(end))
        prev_end = end
    return WindowAllocation(windows)


def optimize_windows(
    M: TransferMatrix,
    init: WindowAllocation,
    generations: int = 10,
    seed: int = 0,
    islands: int = 3,
    pop_size: int = 10,
    inner_k: int = 2,
    post_k: Sequence[int] = (3, 4),
    gap: float = STATION_GAP,
    stop_event: Optional[threading.Event] = None,
) -> Schedule:
    """Search window allocations maximizing M_min of the refined assignment.

    jDE islands evolve the window encoding, passing their best individual to
    the next island after every generation. The best allocation found is
    then refined with longer paths (``post_k``), unless no generation ran.
    """
    init.validate(gap)
    if islands < 1:
        raise PreconditionError("Need at least one island", islands=islands)

    times = [opp.t_k for _, _, opp in M]
    t_lo = min([init.windows[j][0] for j in range(STATIONS)] + times + [0.0])
    t_hi = M.t_f
    x0 = encode_windows(init)
    max_length = max(2.0 * max(t_hi - t_lo, DAY) / STATIONS, *x0[2 * STATIONS :])
    bounds = (
        [(0.0, 1.0)] * STATIONS
        + [(t_lo, t_hi)] * STATIONS
        + [(0.0, max_length)] * STATIONS
    )
    x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])

    def fitness(x: np.ndarray) -> float:
        W = decode_windows(x, t_hi, gap)
        if W is None:
            return 0.0
        return -evaluate_windows(M, W, inner_k).M_min

    init_schedule = evaluate_windows(M, init, inner_k)
    history = [init_schedule.M_min]
    if generations <= 0:
        init_schedule.history = history
        return init_schedule

    rngs = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(islands)
    ]
    pops = [
        JDEPopulation(fitness, bounds, pop_size, rng, init=[x0] if i == 0 else None)
        for i, rng in enumerate(rngs)
    ]
    best_fit, best_x = -init_schedule.M_min, None
    for g in range(generations):
        if stop_event is not None and stop_event.is_set():
            logger.info(f"Window optimization stopped after {g} generations")
            break
        for pop in pops:
            pop.step()
        if islands > 1:
            outgoing = [pop.migrants(1) for pop in pops]
            for i, pop in enumerate(pops):
                pop.immigrate(outgoing[(i - 1) % islands])
        for pop in pops:
            if pop.best_fun < best_fit:
                best_fit, best_x = pop.best_fun, pop.best_x
        history.append(-best_fit)
        logger.debug(f"Window DE generation {g + 1}: M_min={-best_fit:.6g}")

    W_best = init if best_x is None else decode_windows(best_x, t_hi, gap)
    schedule = evaluate_windows(M, W_best, inner_k)
    for k in post_k:
        schedule = path_refine(M, W_best, k, schedule)
    schedule.history = history
    logger.info(
        f"Window optimization: M_min {history[0] / M_MAX:.3f} -> "
        f"{schedule.M_min / M_MAX:.3f} m_max over {len(history) - 1} generations"
    )
    return schedule
