"""Asteroid populations: synthetic generation, quantile filtering and file I/O."""

import csv
import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.optimize import brentq, least_squares

from .astro import OrbitalElements
from .constants import ALPHA, AU, DAY, M_MAX, M_MIN
from .exceptions import (
    EmptyPopulationError,
    ParseError,
    ValidationError,
)

logger = logging.getLogger(__name__)

FILE_HEADER = [
    "id",
    "a_au",
    "e",
    "i_deg",
    "raan_deg",
    "argp_deg",
    "M0_deg",
    "epoch0_day",
    "m0_kg",
]


@dataclass(frozen=True)
class Asteroid:
    """A single asteroid: unique id, orbit and initial mass (kg)."""

    id: int
    el: OrbitalElements
    m0: float

    def __post_init__(self):
        if not M_MIN * (1 - 1e-12) <= self.m0 <= M_MAX * (1 + 1e-12):
            raise ValidationError("Asteroid mass out of range", id=self.id, m0=self.m0)
        if not self.el.e < 0.9:
            raise ValidationError("Asteroid eccentricity must be < 0.9", id=self.id)


@dataclass(frozen=True)
class Population:
    """Immutable ordered collection of asteroids with unique ids."""

    asteroids: Tuple[Asteroid, ...]
    meta: Dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "asteroids", tuple(self.asteroids))
        if not self.asteroids:
            raise EmptyPopulationError(source=self.meta.get("source"))
        seen = set()
        for ast in self.asteroids:
            if ast.id in seen:
                raise ValidationError("Duplicate asteroid id", id=ast.id)
            seen.add(ast.id)
        object.__setattr__(self, "_index", {a.id: a for a in self.asteroids})

    def __len__(self) -> int:
        return len(self.asteroids)

    def __iter__(self) -> Iterator[Asteroid]:
        return iter(self.asteroids)

    def __contains__(self, ast_id: object) -> bool:
        return ast_id in self._index  # type: ignore[attr-defined]

    def get(self, ast_id: int) -> Asteroid:
        try:
            return self._index[ast_id]  # type: ignore[attr-defined]
        except KeyError:
            raise ValidationError("Unknown asteroid id", id=ast_id)

    @property
    def ids(self) -> List[int]:
        return [a.id for a in self.asteroids]

    def subset(self, ids: Iterable[int], source: str = "subset") -> "Population":
        """Population restricted to ``ids``, keeping the original order."""
        wanted = set(ids)
        kept = [a for a in self.asteroids if a.id in wanted]
        return Population(tuple(kept), {**self.meta, "source": source})


@dataclass(frozen=True)
class PopulationModel:
    """Parameters of the synthetic population generator.

    Semi-major axes follow a Gaussian mixture; eccentricity and inclination are
    truncated Gaussians whose location is calibrated so the truncated mean hits
    the target; masses are a truncated log-normal fitted to the mean and the fraction
    above ``m_heavy``; ``m_std`` is the reference spread checked by the
    calibration statistics.
    """

    a_peaks_au: Tuple[float, ...] = (2.33, 2.67, 3.15)
    a_weights: Tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    a_sigma_au: float = 0.12
    a_bounds_au: Tuple[float, float] = (1.5, 4.0)
    e_mean: float = 0.150
    e_std: float = 0.0783
    e_bounds: Tuple[float, float] = (0.0, 0.6)
    i_mean_deg: float = 9.21
    i_std_deg: float = 6.14
    i_bounds_deg: Tuple[float, float] = (0.0, 60.0)
    m_mean: float = 6.71e13
    m_std: float = 5.21e13
    m_heavy: float = 1e14
    m_heavy_fraction: float = 0.259


# ----------------------------------------------------------------------------
# Calibration helpers
# ----------------------------------------------------------------------------


def _truncnorm_with_mean(mean: float, sd: float, lo: float, hi: float):
    """Truncated normal with scale ``sd`` whose truncated mean equals ``mean``."""

    def mean_gap(loc: float) -> float:
        a, b = (lo - loc) / sd, (hi - loc) / sd
        return stats.truncnorm.mean(a, b, loc=loc, scale=sd) - mean

    loc = brentq(mean_gap, lo - 5 * sd, hi + 5 * sd, xtol=1e-12)
    return stats.truncnorm((lo - loc) / sd, (hi - loc) / sd, loc=loc, scale=sd)


@lru_cache(maxsize=8)
def fit_mass_model(
    mean: float,
    heavy: float,
    heavy_fraction: float,
    lo: float = M_MIN,
    hi: float = M_MAX,
) -> Tuple[float, float]:
    """Log-normal (mu, sigma) truncated to [lo, hi] matching mean and tail fraction."""
    ln_lo, ln_hi, ln_heavy = math.log(lo), math.log(hi), math.log(heavy)
    Phi = stats.norm.cdf

    def residuals(p: np.ndarray) -> np.ndarray:
        mu, sigma = p[0], abs(p[1]) + 1e-9
        z_lo, z_hi = (ln_lo - mu) / sigma, (ln_hi - mu) / sigma
        norm = Phi(z_hi) - Phi(z_lo)
        m1 = (
            math.exp(mu + sigma**2 / 2)
            * (Phi(z_hi - sigma) - Phi(z_lo - sigma))
            / norm
        )
        tail = (Phi(z_hi) - Phi((ln_heavy - mu) / sigma)) / norm
        return np.array([m1 / mean - 1.0, tail - heavy_fraction])

    fit = least_squares(residuals, x0=[math.log(mean), 1.0], xtol=1e-14, ftol=1e-14)
    return float(fit.x[0]), float(abs(fit.x[1]) + 1e-9)


def _sample_masses(
    rng: np.random.Generator, n: int, model: PopulationModel
) -> np.ndarray:
    mu, sigma = fit_mass_model(model.m_mean, model.m_heavy, model.m_heavy_fraction)
    u_lo = stats.norm.cdf((math.log(M_MIN) - mu) / sigma)
    u_hi = stats.norm.cdf((math.log(M_MAX) - mu) / sigma)
    u = rng.uniform(u_lo, u_hi, size=n)
    m = np.exp(mu + sigma * stats.norm.ppf(u))
    return np.clip(m, M_MIN, M_MAX)


def _sample_semi_major_axes(
    rng: np.random.Generator, n: int, model: PopulationModel
) -> np.ndarray:
    lo, hi = model.a_bounds_au
    weights = np.asarray(model.a_weights, dtype=float)
    weights = weights / weights.sum()
    out = np.empty(0)
    while out.size < n:
        k = rng.choice(len(model.a_peaks_au), size=2 * (n - out.size), p=weights)
        draw = rng.normal(np.asarray(model.a_peaks_au)[k], model.a_sigma_au)
        out = np.concatenate([out, draw[(draw >= lo) & (draw <= hi)]])
    return out[:n]


def generate_synthetic(
    n: int, seed: int, model: Optional[PopulationModel] = None
) -> Population:
    """Draw a population calibrated to main-belt summary statistics."""
    if n < 1:
        raise EmptyPopulationError("Cannot generate an empty population")
    model = model or PopulationModel()
    rng = np.random.default_rng(seed)

    a_au = _sample_semi_major_axes(rng, n, model)
    e_dist = _truncnorm_with_mean(model.e_mean, model.e_std, *model.e_bounds)
    e = e_dist.ppf(rng.uniform(size=n))
    i_dist = _truncnorm_with_mean(
        model.i_mean_deg, model.i_std_deg, *model.i_bounds_deg
    )
    i_deg = i_dist.ppf(rng.uniform(size=n))
    angles = rng.uniform(0.0, 2 * math.pi, size=(n, 3))
    m0 = _sample_masses(rng, n, model)

    asteroids = [
        Asteroid(
            id=k + 1,
            el=OrbitalElements(
                a=float(a_au[k]) * AU,
                e=float(e[k]),
                i=math.radians(float(i_deg[k])),
                raan=float(angles[k, 0]),
                argp=float(angles[k, 1]),
                M0=float(angles[k, 2]),
                epoch0=0.0,
            ),
            m0=float(m0[k]),
        )
        for k in range(n)
    ]
    logger.info(f"Generated synthetic population of {n} asteroids (seed={seed})")
    return Population(tuple(asteroids), {"source": "synthetic", "seed": str(seed)})


@dataclass
class PopulationStatistics:
    """Summary statistics used to check the generator's calibration."""

    count: int
    a_mean_au: float
    a_std_au: float
    e_mean: float
    e_std: float
    i_mean_deg: float
    i_std_deg: float
    m_mean: float
    m_std: float
    heavy_fraction: float
    a_modes_au: List[float]

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def population_statistics(
    pop: Population, grid_points: int = 2000
) -> PopulationStatistics:
    """Moments of a, e, i, m0 and the modes of the kernel-density estimate of a."""
    a = np.array([x.el.a / AU for x in pop])
    e = np.array([x.el.e for x in pop])
    i = np.degrees([x.el.i for x in pop])
    m = np.array([x.m0 for x in pop])

    modes: List[float] = []
    if len(pop) > 2 and np.ptp(a) > 0:
        kde = stats.gaussian_kde(a)
        grid = np.linspace(a.min(), a.max(), grid_points)
        dens = kde(grid)
        peaks = np.where((dens[1:-1] > dens[:-2]) & (dens[1:-1] > dens[2:]))[0] + 1
        modes = [float(grid[p]) for p in peaks if dens[p] > 0.05 * dens.max()]

    return PopulationStatistics(
        count=len(pop),
        a_mean_au=float(a.mean()),
        a_std_au=float(a.std()),
        e_mean=float(e.mean()),
        e_std=float(e.std()),
        i_mean_deg=float(i.mean()),
        i_std_deg=float(i.std()),
        m_mean=float(m.mean()),
        m_std=float(m.std()),
        heavy_fraction=float((m > 1e14).mean()),
        a_modes_au=modes,
    )


# ----------------------------------------------------------------------------
# Filtering
# ----------------------------------------------------------------------------


def filter_by_arrival_quantile(
    pop: Population, a_D: float, q: float, estimator
) -> Population:
    """Keep the asteroids whose estimated arrival mass ranks above quantile ``q``.

    ``estimator.estimate(asteroid, a_D)`` returns a transfer time in seconds.
    Ties are broken by ascending id; the original order is kept in the output.
    """
    if not 0.0 <= q < 1.0:
        raise ValidationError("Quantile must lie in [0, 1)", q=q)
    n = len(pop)
    n_drop = int(math.floor(q * n + 1e-9))
    if n_drop == 0:
        return pop

    scored = []
    for ast in pop:
        t_e = estimator.estimate(ast, a_D)
        scored.append((-ast.m0 * max(0.0, 1.0 - ALPHA * t_e), ast.id))
    scored.sort()
    keep = {ast_id for _, ast_id in scored[: n - n_drop]}
    logger.info(f"Quantile filter q={q}: kept {len(keep)} of {n} asteroids")
    return pop.subset(keep, source=f"quantile({q})")


# ----------------------------------------------------------------------------
# File I/O
# ----------------------------------------------------------------------------


_DEG = Fraction(math.pi) / 180
COLUMN_UNITS = (
    Fraction(AU),
    Fraction(1),
    _DEG,
    _DEG,
    _DEG,
    _DEG,
    Fraction(DAY),
    Fraction(1),
)


def _from_text(text: str, unit: Fraction) -> float:
    return float(Fraction(text.strip()) * unit)


def _to_text(x: float, unit: Fraction) -> str:
    """Shortest tried decimal, in file units, that reads back to exactly ``x``."""
    value = Fraction(float(x)) / unit
    text = repr(float(value))
    for digits in (17, 25, 40):
        if _from_text(text, unit) == x:
            break
        with localcontext() as ctx:
            ctx.prec = digits
            text = str(Decimal(value.numerator) / Decimal(value.denominator))
    return text


def save(pop: Population, path: Union[str, Path]) -> None:
    """Write one asteroid per row (AU, degrees, days, kg) with a header row.

    Every value reads back bit for bit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FILE_HEADER)
        for ast in pop:
            el = ast.el
            values = (el.a, el.e, el.i, el.raan, el.argp, el.M0, el.epoch0, ast.m0)
            writer.writerow(
                [ast.id]
                + [_to_text(x, unit) for x, unit in zip(values, COLUMN_UNITS)]
            )
    logger.info(f"Saved {len(pop)} asteroids to {path}")


def _parse_row(row: Sequence[str], line: int, path: str) -> Asteroid:
    if len(row) != len(FILE_HEADER):
        raise ParseError(
            f"Expected {len(FILE_HEADER)} fields, got {len(row)}",
            line=line,
            path=path,
            content_preview=",".join(row),
        )
    try:
        ast_id = int(row[0])
        values = [_from_text(x, unit) for x, unit in zip(row[1:], COLUMN_UNITS)]
    except (ValueError, ZeroDivisionError, OverflowError):
        raise ParseError(
            "Non-numeric field", line=line, path=path, content_preview=",".join(row)
        )
    a, e, i, raan, argp, M0, epoch0, m0 = values
    try:
        return Asteroid(
            id=ast_id,
            el=OrbitalElements(a, e, i, raan, argp, M0, epoch0),
            m0=m0,
        )
    except ValidationError as err:
        err.details["line"] = line
        raise


def load(path: Union[str, Path]) -> Population:
    """Read a population written by :func:`save`."""
    path = Path(path)
    asteroids: List[Asteroid] = []
    seen: Dict[int, int] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyPopulationError(source=str(path))
        if [h.strip() for h in header] != FILE_HEADER:
            raise ParseError("Missing or unexpected header row", line=1, path=str(path))
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            ast = _parse_row(row, line, str(path))
            if ast.id in seen:
                raise ValidationError(
                    "Duplicate asteroid id",
                    id=ast.id,
                    line=line,
                    first_line=seen[ast.id],
                )
            seen[ast.id] = line
            asteroids.append(ast)
    if not asteroids:
        raise EmptyPopulationError(source=str(path))
    return Population(tuple(asteroids), {"source": str(path)})
