"""Pipeline configuration: one dataclass section per stage, stored as JSON.

Loading is strict. Unknown sections or keys raise :class:`ConfigError` so a
typo never silently falls back to a default.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union

from .constants import AU, DAY, M_MAX, YEAR
from .exceptions import ConfigError
from .legs import LegBounds, LegSearch
from .lowthrust import OcpOptions
from .lrts import BeamParams
from .population import PopulationModel

logger = logging.getLogger(__name__)

S = TypeVar("S")


@dataclass
class PopulationSection:
    """Synthetic population, or a CSV file when ``path`` is set."""

    size: int = 500
    path: Optional[str] = None
    a_peaks_au: List[float] = field(default_factory=lambda: [2.33, 2.67, 3.15])
    a_weights: List[float] = field(default_factory=lambda: [1 / 3, 1 / 3, 1 / 3])
    a_sigma_au: float = 0.12

    def model(self) -> PopulationModel:
        return PopulationModel(
            a_peaks_au=tuple(self.a_peaks_au),
            a_weights=tuple(self.a_weights),
            a_sigma_au=self.a_sigma_au,
        )


@dataclass
class OcpSection:
    multi_starts: int = 10
    max_iter: int = 100
    residual_tol: float = 1e-6
    polish: bool = True

    def options(self, seed: int) -> OcpOptions:
        return OcpOptions(
            multi_starts=self.multi_starts,
            max_iter=self.max_iter,
            residual_tol=self.residual_tol,
            polish=self.polish,
            seed=seed,
        )


@dataclass
class SurrogateSection:
    """Training database and regressor. ``enabled=False`` keeps Edelbaum alone."""

    enabled: bool = True
    db_size: int = 5000
    a_st_min_au: float = 0.9
    a_st_max_au: float = 1.4
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 64
    momentum: float = 0.9
    hidden: List[int] = field(default_factory=lambda: [50] * 5)
    test_fraction: float = 0.2
    patience: Optional[int] = 20


@dataclass
class SearchSection:
    """Mother-ship tree search."""

    b: int = 5
    g: int = 5
    runs: int = 1
    slice_days: float = 91.3125
    a_D_au: float = 1.3198
    quantile: float = 0.5
    T_ref_days: float = 200.0
    phasing_weight: float = 0.0
    launch_window_years: float = 2.0
    e2a_max_days: float = 480.0
    a2a_max_days: float = 380.0
    min_leg_days: float = 20.0
    leg_pop_size: int = 30
    leg_generations: int = 150

    def bounds(self) -> LegBounds:
        return LegBounds(
            launch_window=(0.0, self.launch_window_years * YEAR),
            e2a_max_days=self.e2a_max_days,
            a2a_max_days=self.a2a_max_days,
            min_days=self.min_leg_days,
        )

    def leg_search(self) -> LegSearch:
        return LegSearch(pop_size=self.leg_pop_size, generations=self.leg_generations)

    def beam(self) -> BeamParams:
        return BeamParams(
            b=self.b,
            g=self.g,
            slice_days=self.slice_days,
            a_D=self.a_D_au * AU,
            T_ref_days=self.T_ref_days,
            phasing_weight=self.phasing_weight,
            bounds=self.bounds(),
            search=self.leg_search(),
        )


@dataclass
class EnsembleSection:
    """Disjoint ensemble selection. The threshold starts at the best J'."""

    ships: int = 2
    delta_fraction: float = 0.01
    repair: bool = True
    refine: bool = True
    refine_maxiter: int = 10


@dataclass
class RingSection:
    popsize: int = 16
    maxiter: int = 200
    sigma0: float = 0.3
    epsilon_days: float = 20.0
    delta: float = 1.5

    @property
    def epsilon(self) -> float:
        return self.epsilon_days * DAY


@dataclass
class ScheduleSection:
    """Greedy escalation targets are in units of the heaviest asteroid mass."""

    m_start: float = 9.0
    m_step: float = 0.05
    generations: int = 10
    islands: int = 3
    pop_size: int = 10
    inner_k: int = 2
    post_k: List[int] = field(default_factory=lambda: [3, 4])
    gap_days: float = 90.0

    @property
    def gap(self) -> float:
        return self.gap_days * DAY

    @property
    def targets(self) -> Tuple[float, float]:
        return self.m_start * M_MAX, self.m_step * M_MAX


@dataclass
class ScoringSection:
    B: float = 1.0
    position_tol_km: float = 10.0
    velocity_tol_mps: float = 0.01


@dataclass
class RuntimeSection:
    seed: int = 0
    workers: int = 1
    out_dir: str = "runs"
    cache: str = "memory"


SECTIONS: Dict[str, Type] = {
    "population": PopulationSection,
    "ocp": OcpSection,
    "surrogate": SurrogateSection,
    "search": SearchSection,
    "ensemble": EnsembleSection,
    "ring": RingSection,
    "schedule": ScheduleSection,
    "scoring": ScoringSection,
    "runtime": RuntimeSection,
}


@dataclass
class PipelineConfig:
    """Every stage parameter of a run. The defaults are the desk profile."""

    population: PopulationSection = field(default_factory=PopulationSection)
    ocp: OcpSection = field(default_factory=OcpSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    search: SearchSection = field(default_factory=SearchSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    ring: RingSection = field(default_factory=RingSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    scoring: ScoringSection = field(default_factory=ScoringSection)
    runtime: RuntimeSection = field(default_factory=RuntimeSection)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.population.size < 1:
            problems.append("population.size must be >= 1")
        if self.runtime.workers < 1:
            problems.append("runtime.workers must be >= 1")
        if self.runtime.cache not in ("memory", "disk", "none"):
            problems.append("runtime.cache must be memory, disk or none")
        if self.ensemble.ships < 1:
            problems.append("ensemble.ships must be >= 1")
        if self.search.runs < 1:
            problems.append("search.runs must be >= 1")
        if not 0.0 <= self.search.quantile < 1.0:
            problems.append("search.quantile must lie in [0, 1)")
        if self.surrogate.patience is not None and self.surrogate.patience < 1:
            problems.append("surrogate.patience must be >= 1 or null")
        if self.ring.delta <= 1.0:
            problems.append("ring.delta must exceed 1")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("Configuration must be a JSON object")
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError("Unknown configuration sections", keys=unknown)
        sections = {
            name: _section(name, section_cls, data.get(name, {}))
            for name, section_cls in SECTIONS.items()
        }
        return cls(**sections)

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as e:
            raise ConfigError(f"Cannot read configuration: {e}", path=str(path))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON: {e.msg}", path=str(path), line=e.lineno)
        logger.debug(f"Loaded configuration from {path}")
        return cls.from_dict(data)

    @classmethod
    def from_env(cls, base: Optional["PipelineConfig"] = None) -> "PipelineConfig":
        """Apply DYSON_RING_SEED, DYSON_RING_WORKERS and DYSON_RING_OUT_DIR."""
        config = base or cls()
        env = {
            "seed": os.environ.get("DYSON_RING_SEED"),
            "workers": os.environ.get("DYSON_RING_WORKERS"),
            "out_dir": os.environ.get("DYSON_RING_OUT_DIR"),
        }
        try:
            return config.with_runtime(
                seed=None if env["seed"] is None else int(env["seed"]),
                workers=None if env["workers"] is None else int(env["workers"]),
                out_dir=env["out_dir"],
            )
        except ValueError as e:
            raise ConfigError(f"Bad runtime environment variable: {e}")

    def with_runtime(
        self,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
        out_dir: Optional[str] = None,
    ) -> "PipelineConfig":
        """Copy with command-line overrides applied to the runtime section."""
        data = self.to_dict()
        runtime = data["runtime"]
        if seed is not None:
            runtime["seed"] = seed
        if workers is not None:
            runtime["workers"] = workers
        if out_dir is not None:
            runtime["out_dir"] = out_dir
        return PipelineConfig.from_dict(data)


def _section(name: str, section_cls: Type[S], values: Any) -> S:
    if not isinstance(values, dict):
        raise ConfigError(f"Section '{name}' must be an object")
    known = {f.name for f in fields(section_cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(
            f"Unknown keys in section '{name}'",
            keys=[f"{name}.{k}" for k in unknown],
        )
    try:
        return section_cls(**values)
    except TypeError as e:
        raise ConfigError(f"Bad values in section '{name}': {e}")
