"""Self-adaptive differential evolution (jDE, rand/1/bin)."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import PreconditionError

logger = logging.getLogger(__name__)

Bounds = Sequence[Tuple[float, float]]

F_LOWER = 0.1
F_UPPER = 0.9
TAU_F = 0.1
TAU_CR = 0.1


@dataclass
class JDEResult:
    x: np.ndarray
    fun: float
    history: List[float] = field(default_factory=list)
    evaluations: int = 0


class JDEPopulation:
    """One evolving jDE population.

    Each individual carries its own F and CR; before producing a trial vector
    they are regenerated with probability 0.1 (F in [0.1, 1.0], CR in [0, 1]).
    Trial components leaving the box are redrawn uniformly inside it.
    Non-finite objective values are treated as +inf.
    """

    def __init__(
        self,
        func: Callable[[np.ndarray], float],
        bounds: Bounds,
        pop_size: int,
        rng: np.random.Generator,
        init: Optional[Sequence[Sequence[float]]] = None,
    ):
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise PreconditionError("jDE needs finite bounds")
        if np.any(hi < lo):
            raise PreconditionError("Lower bound above upper bound")
        if pop_size < 4:
            raise PreconditionError("rand/1 mutation needs at least 4 individuals")
        self.func = func
        self.lo, self.hi = lo, hi
        self.rng = rng
        self.dim = lo.size

        self.x = lo + rng.random((pop_size, self.dim)) * (hi - lo)
        if init is not None:
            seeds = np.clip(np.atleast_2d(np.asarray(init, dtype=float)), lo, hi)
            k = min(len(seeds), pop_size)
            self.x[:k] = seeds[:k]
        self.F = np.full(pop_size, 0.5)
        self.CR = np.full(pop_size, 0.9)
        self.evaluations = 0
        self.fit = np.array([self._evaluate(xi) for xi in self.x])
        self.history: List[float] = [self.best_fun]

    def _evaluate(self, x: np.ndarray) -> float:
        self.evaluations += 1
        value = float(self.func(x))
        return value if np.isfinite(value) else np.inf

    @property
    def size(self) -> int:
        return len(self.fit)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.fit))

    @property
    def best_x(self) -> np.ndarray:
        return self.x[self.best_index].copy()

    @property
    def best_fun(self) -> float:
        return float(self.fit[self.best_index])

    def _trial(self, i: int) -> Tuple[np.ndarray, float, float]:
        rng = self.rng
        F = F_LOWER + F_UPPER * rng.random() if rng.random() < TAU_F else self.F[i]
        CR = rng.random() if rng.random() < TAU_CR else self.CR[i]
        others = [k for k in range(self.size) if k != i]
        r1, r2, r3 = rng.choice(others, size=3, replace=False)
        mutant = self.x[r1] + F * (self.x[r2] - self.x[r3])
        cross = rng.random(self.dim) < CR
        cross[rng.integers(self.dim)] = True
        trial = np.where(cross, mutant, self.x[i])
        out = (trial < self.lo) | (trial > self.hi)
        if np.any(out):
            redraw = self.lo + rng.random(self.dim) * (self.hi - self.lo)
            trial = np.where(out, redraw, trial)
        return trial, F, CR

    def step(self) -> float:
        """Advance one generation; returns the best objective value."""
        for i in range(self.size):
            trial, F, CR = self._trial(i)
            f = self._evaluate(trial)
            if f <= self.fit[i]:
                self.x[i], self.fit[i] = trial, f
                self.F[i], self.CR[i] = F, CR
        self.history.append(self.best_fun)
        return self.best_fun

    def evolve(self, generations: int) -> float:
        for _ in range(generations):
            self.step()
        return self.best_fun

    def migrants(self, count: int = 1) -> List[Tuple[np.ndarray, float]]:
        order = np.argsort(self.fit, kind="stable")[:count]
        return [(self.x[k].copy(), float(self.fit[k])) for k in order]

    def immigrate(self, incoming: Sequence[Tuple[np.ndarray, float]]) -> None:
        """Replace the worst individuals with better incoming ones."""
        for x, f in incoming:
            worst = int(np.argmax(self.fit))
            if f < self.fit[worst]:
                self.x[worst], self.fit[worst] = np.array(x, copy=True), f

    def result(self) -> JDEResult:
        return JDEResult(
            self.best_x, self.best_fun, list(self.history), self.evaluations
        )


def jde_optimize(
    func: Callable[[np.ndarray], float],
    bounds: Bounds,
    pop_size: int = 30,
    generations: int = 150,
    seed: Optional[int] = 0,
    init: Optional[Sequence[Sequence[float]]] = None,
) -> JDEResult:
    """Minimize ``func`` over a box; deterministic given ``seed``.

    ``generations=0`` returns the best member of the initial population.
    """
    rng = np.random.default_rng(seed)
    population = JDEPopulation(func, bounds, pop_size, rng, init)
    population.evolve(generations)
    result = population.result()
    logger.debug(
        f"jDE: best={result.fun:.6g} after {generations} generations "
        f"({result.evaluations} evaluations)"
    )
    return result
