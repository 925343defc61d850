"""dyson-ring - Asteroid-built Dyson ring: mother-ship search, low-thrust transfers
and station scheduling"""

__version__ = "0.1.0"

from .astro import (
    OrbitalElements,
    RingConfig,
    StateVector,
    kepler_propagate,
    lambert_solve,
    station_state,
    synodic_period,
)
from .config import PipelineConfig
from .ensemble import EnsembleResult, ensemble_select
from .exceptions import (
    ConfigError,
    DysonRingError,
    EmptyPopulationError,
    ErrorType,
    InfeasibleLegError,
    NoFeasibleRingError,
    ParseError,
    PartialEnsembleError,
    PreconditionError,
    StageDependencyError,
    ValidationError,
)
from .legs import MothershipTrajectory, solve_a2a, solve_e2a
from .lowthrust import (
    OcpOptions,
    TransferSolution,
    shooting_residual,
    solve_phase_free,
    solve_rendezvous,
)
from .lrts import BeamParams, lrts_pool, lrts_run
from .pipeline import Pipeline, run_pipeline, run_stage
from .population import Asteroid, Population, generate_synthetic
from .result import Err, Ok, Result
from .ring import TransferMatrix, build_transfer_matrix, optimize_ring_parameters
from .scheduling import (
    Schedule,
    WindowAllocation,
    greedy_schedule,
    optimize_windows,
    path_refine,
)
from .scoring import ScoreBreakdown, Solution, score, validate
from .surrogate import TransferTimeEstimator, edelbaum_time, train_correction

__all__ = [
    # Orbital mechanics
    "OrbitalElements",
    "StateVector",
    "RingConfig",
    "kepler_propagate",
    "lambert_solve",
    "station_state",
    "synodic_period",
    # Population
    "Asteroid",
    "Population",
    "generate_synthetic",
    # Low-thrust transfers
    "OcpOptions",
    "TransferSolution",
    "shooting_residual",
    "solve_rendezvous",
    "solve_phase_free",
    # Surrogate
    "TransferTimeEstimator",
    "edelbaum_time",
    "train_correction",
    # Mother ships
    "MothershipTrajectory",
    "solve_e2a",
    "solve_a2a",
    "BeamParams",
    "lrts_run",
    "lrts_pool",
    "EnsembleResult",
    "ensemble_select",
    # Ring and schedule
    "TransferMatrix",
    "build_transfer_matrix",
    "optimize_ring_parameters",
    "WindowAllocation",
    "Schedule",
    "greedy_schedule",
    "path_refine",
    "optimize_windows",
    # Scoring
    "Solution",
    "ScoreBreakdown",
    "score",
    "validate",
    # Pipeline
    "PipelineConfig",
    "Pipeline",
    "run_stage",
    "run_pipeline",
    # Exceptions
    "DysonRingError",
    "ErrorType",
    "ConfigError",
    "EmptyPopulationError",
    "InfeasibleLegError",
    "NoFeasibleRingError",
    "ParseError",
    "PartialEnsembleError",
    "PreconditionError",
    "StageDependencyError",
    "ValidationError",
    # Result type
    "Result",
    "Ok",
    "Err",
]
