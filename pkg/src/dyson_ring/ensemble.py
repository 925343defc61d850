"""Selection of asteroid-disjoint mother-ship ensembles.

Candidates are drawn uniformly from the pool members ranked above a slowly
decaying threshold. A candidate sharing exactly one asteroid with the current
ensemble can still join once that asteroid is dropped from one of the two
trajectories involved. A draw whose repair fails leaves the threshold as is
and is not drawn again until the threshold or the ensemble changes.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Set

import numpy as np

from .exceptions import DysonRingError, PartialEnsembleError, PreconditionError
from .legs import MothershipTrajectory

logger = logging.getLogger(__name__)

RankFn = Callable[[MothershipTrajectory], float]
RemoveFn = Callable[[MothershipTrajectory, int], MothershipTrajectory]


@dataclass
class EnsembleResult:
    trajectories: List[MothershipTrajectory]
    j_primes: List[float]
    threshold: float
    draws: int
    repairs: int

    @property
    def asteroid_ids(self) -> List[int]:
        return [a for t in self.trajectories for a in t.asteroid_ids]

    @property
    def mean_j_prime(self) -> float:
        return float(np.mean(self.j_primes)) if self.j_primes else 0.0


def is_disjoint(trajectories: Sequence[MothershipTrajectory]) -> bool:
    seen: Set[int] = set()
    for traj in trajectories:
        ids = set(traj.asteroid_ids)
        if ids & seen:
            return False
        seen |= ids
    return True


def ensemble_select(
    pool: Sequence[MothershipTrajectory],
    J_init: float,
    delta: float,
    seed: Optional[int] = 0,
    rank: Optional[RankFn] = None,
    remove: Optional[RemoveFn] = None,
    size: int = 10,
    j_primes: Optional[Sequence[float]] = None,
    max_blocked: Optional[int] = None,
) -> EnsembleResult:
    """Build ``size`` pairwise-disjoint trajectories from ``pool``.

    Args:
        pool: Candidate trajectories
        J_init: Starting threshold on J'
        delta: Threshold decrement, applied when no candidate is left above
            the threshold or a draw shares two or more asteroids
        seed: Sampling seed
        rank: J' of a (possibly repaired) trajectory
        remove: Drops one asteroid from a trajectory (re-solving and refining
            as needed); raises DysonRingError when infeasible. ``None``
            disables single-overlap repair.
        size: Ensemble size
        j_primes: Precomputed J' of the pool members, in pool order
        max_blocked: Consecutive decrements tolerated once the threshold is
            below every pool member (default 20 * len(pool))

    Raises:
        PartialEnsembleError: The pool cannot supply ``size`` members.
    """
    if delta <= 0.0:
        raise PreconditionError("Threshold decrement must be positive", delta=delta)
    if rank is None and (j_primes is None or remove is not None):
        raise PreconditionError("Repair and unranked pools need a rank function")
    if len(pool) < size:
        raise PartialEnsembleError(0, size)

    rng = np.random.default_rng(seed)
    scores = list(j_primes) if j_primes is not None else [rank(t) for t in pool]
    floor = min(scores)
    max_blocked = max_blocked if max_blocked is not None else 20 * len(pool)

    J_tau = J_init
    chosen: List[MothershipTrajectory] = []
    chosen_scores: List[float] = []
    used: Set[int] = set()
    # unrepairable at the current threshold and ensemble
    stalled: Set[int] = set()
    owner: Dict[int, int] = {}
    draws = repairs = blocked = 0

    def block() -> None:
        nonlocal J_tau, blocked
        J_tau -= delta
        stalled.clear()
        if J_tau < floor:
            blocked += 1

    while len(chosen) < size:
        if blocked > max_blocked:
            raise PartialEnsembleError(len(chosen), size, selected=chosen)
        candidates = [
            k
            for k in range(len(pool))
            if k not in used and k not in stalled and scores[k] > J_tau
        ]
        if not candidates:
            if all(k in used for k in range(len(pool))):
                raise PartialEnsembleError(len(chosen), size, selected=chosen)
            block()
            continue

        k = int(candidates[rng.integers(len(candidates))])
        draws += 1
        S_R = pool[k]
        overlap = [a for a in S_R.asteroid_ids if a in owner]

        if not overlap:
            _accept(chosen, chosen_scores, owner, S_R, scores[k])
            used.add(k)
            stalled.clear()
            blocked = 0
            continue

        if len(overlap) > 1:
            block()
            continue

        stalled.add(k)
        if remove is not None:
            a = overlap[0]
            j = owner[a]
            n = len(chosen) + 1
            option_new = option_old = None
            mean_new = mean_old = -np.inf
            try:
                if len(S_R) > 1:
                    option_new = remove(S_R, a)
                    j_new = rank(option_new)
                    mean_new = (sum(chosen_scores) + j_new) / n
            except DysonRingError as e:
                logger.debug(f"Removing {a} from candidate failed: {e}")
            try:
                if len(chosen[j]) > 1:
                    option_old = remove(chosen[j], a)
                    j_old = rank(option_old)
                    mean_old = (
                        sum(chosen_scores) - chosen_scores[j] + j_old + scores[k]
                    ) / n
            except DysonRingError as e:
                logger.debug(f"Removing {a} from ensemble member failed: {e}")

            if max(mean_new, mean_old) > J_tau:
                if mean_new > mean_old:
                    _accept(chosen, chosen_scores, owner, option_new, j_new)
                else:
                    _replace(chosen, chosen_scores, owner, j, option_old, j_old)
                    _accept(chosen, chosen_scores, owner, S_R, scores[k])
                used.add(k)
                stalled.clear()
                repairs += 1
                blocked = 0
                logger.debug(f"Repaired overlap on asteroid {a}")

    logger.info(
        f"Ensemble of {len(chosen)} selected after {draws} draws "
        f"({repairs} repairs, final threshold {J_tau:.4g})"
    )
    return EnsembleResult(chosen, chosen_scores, J_tau, draws, repairs)


def _accept(
    chosen: List[MothershipTrajectory],
    scores: List[float],
    owner: Dict[int, int],
    traj: MothershipTrajectory,
    score: float,
) -> None:
    idx = len(chosen)
    chosen.append(traj)
    scores.append(score)
    for a in traj.asteroid_ids:
        owner[a] = idx


def _replace(
    chosen: List[MothershipTrajectory],
    scores: List[float],
    owner: Dict[int, int],
    idx: int,
    traj: MothershipTrajectory,
    score: float,
) -> None:
    for a in chosen[idx].asteroid_ids:
        owner.pop(a, None)
    chosen[idx] = traj
    scores[idx] = score
    for a in traj.asteroid_ids:
        owner[a] = idx
