"""Custom exceptions for dyson_ring.

Every failure the pipeline can report is a ``DysonRingError`` carrying a
machine-readable ``ErrorType`` and a details dict, so stage errors, batch
failures and validation problems serialize the same way.
"""

from enum import Enum
from typing import Any, Dict, Optional


class ErrorType(Enum):
    """Types of errors that can occur while building a ring solution."""

    # Kinematics
    DEGENERATE_ORBIT = "degenerate_orbit"
    INFEASIBLE_GEOMETRY = "infeasible_geometry"
    SINGULAR_GEOMETRY = "singular_geometry"
    INFINITE_SYNODIC = "infinite_synodic"

    # Optimal control
    SINGULAR_CONTROL = "singular_control"
    PROPAGATION_FAILED = "propagation_failed"
    PRECONDITION = "precondition"

    # Data
    PARSE_ERROR = "parse_error"
    VALIDATION_ERROR = "validation_error"
    EMPTY_POPULATION = "empty_population"

    # Surrogate
    DATABASE_QUALITY = "database_quality"
    TRAINING_FAILED = "training_failed"

    # Search and construction
    INFEASIBLE_LEG = "infeasible_leg"
    PARTIAL_ENSEMBLE = "partial_ensemble"
    NO_FEASIBLE_RING = "no_feasible_ring"

    # Orchestration
    STAGE_DEPENDENCY = "stage_dependency"
    INVALID_CONFIG = "invalid_config"
    INTERRUPTED = "interrupted"

    UNKNOWN_ERROR = "unknown_error"


class DysonRingError(Exception):
    """Base exception for all dyson_ring errors.

    Attributes:
        message: Human-readable error message
        error_type: Type of error from ErrorType enum
        details: Optional dict with additional error context
    """

    def __init__(
        self,
        message: str,
        error_type: ErrorType = ErrorType.UNKNOWN_ERROR,
        details: Optional[dict] = None,
    ):
        self.message = message
        self.error_type = error_type
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self) -> str:
        base = f"[{self.error_type.value}] {self.message}"
        if self.details:
            details_str = ", ".join(f"{k}={v}" for k, v in self.details.items())
            return f"{base} ({details_str})"
        return base

    def to_dict(self) -> dict:
        """Convert exception to dictionary for logging/serialization."""
        return {
            "error_type": self.error_type.value,
            "message": self.message,
            "details": self.details,
        }


def _details(**kwargs: Any) -> Dict[str, Any]:
    return {k: v for k, v in kwargs.items() if v is not None}


class DegenerateOrbitError(DysonRingError):
    """Raised when Kepler's equation does not converge for an orbit."""

    def __init__(self, message: str, e: Optional[float] = None, **kwargs):
        super().__init__(
            message, ErrorType.DEGENERATE_ORBIT, _details(eccentricity=e, **kwargs)
        )


class InfeasibleGeometryError(DysonRingError):
    """Raised when a Lambert arc cannot be found for the requested geometry."""

    def __init__(self, message: str, tof: Optional[float] = None, **kwargs):
        super().__init__(
            message, ErrorType.INFEASIBLE_GEOMETRY, _details(tof=tof, **kwargs)
        )


class SingularGeometryError(DysonRingError):
    """Raised for (near) 0 or 180 degree Lambert transfers."""

    def __init__(self, message: str, transfer_angle: Optional[float] = None):
        super().__init__(
            message,
            ErrorType.SINGULAR_GEOMETRY,
            _details(transfer_angle_rad=transfer_angle),
        )


class InfiniteSynodicError(DysonRingError):
    """Raised when two orbits share a mean motion."""

    def __init__(self, message: str = "Mean motions are equal"):
        super().__init__(message, ErrorType.INFINITE_SYNODIC)


class SingularControlError(DysonRingError):
    """Raised when the velocity costate vanishes and thrust has no direction."""

    def __init__(self, message: str = "Velocity costate has zero norm"):
        super().__init__(message, ErrorType.SINGULAR_CONTROL)


class PropagationError(DysonRingError):
    """Raised when numerical integration of the augmented dynamics fails."""

    def __init__(self, message: str, t_reached: Optional[float] = None, **kwargs):
        super().__init__(
            message,
            ErrorType.PROPAGATION_FAILED,
            _details(t_reached=t_reached, **kwargs),
        )


class PreconditionError(DysonRingError):
    """Raised when an operation is called with inputs outside its domain."""

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorType.PRECONDITION, _details(**kwargs))


class ParseError(DysonRingError):
    """Raised when an artifact file cannot be parsed."""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        path: Optional[str] = None,
        content_preview: Optional[str] = None,
    ):
        self.line = line
        preview = None
        if content_preview:
            preview = (
                content_preview[:100] + "..."
                if len(content_preview) > 100
                else content_preview
            )
        super().__init__(
            message,
            ErrorType.PARSE_ERROR,
            _details(line=line, path=path, content_preview=preview),
        )


class ValidationError(DysonRingError):
    """Raised when a domain object violates its invariants."""

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorType.VALIDATION_ERROR, _details(**kwargs))


class EmptyPopulationError(DysonRingError):
    """Raised when a population would contain no asteroids."""

    def __init__(
        self, message: str = "Population is empty", source: Optional[str] = None
    ):
        super().__init__(message, ErrorType.EMPTY_POPULATION, _details(source=source))


class DatabaseQualityError(DysonRingError):
    """Raised when too few training transfers converged."""

    def __init__(self, converged: int, requested: int):
        super().__init__(
            f"Only {converged} of {requested} training transfers converged",
            ErrorType.DATABASE_QUALITY,
            {"converged": converged, "requested": requested},
        )


class TrainingFailedError(DysonRingError):
    """Raised when regressor training diverges.

    Attributes:
        checkpoint: the last model whose loss was finite, if any
    """

    def __init__(self, message: str, epoch: Optional[int] = None, checkpoint=None):
        self.checkpoint = checkpoint
        super().__init__(message, ErrorType.TRAINING_FAILED, _details(epoch=epoch))


class InfeasibleLegError(DysonRingError):
    """Raised when no finite-cost impulsive leg was found."""

    def __init__(self, message: str, target: Optional[int] = None, **kwargs):
        super().__init__(
            message, ErrorType.INFEASIBLE_LEG, _details(target=target, **kwargs)
        )


class PartialEnsembleError(DysonRingError):
    """Raised when the trajectory pool is exhausted before the ensemble is full.

    Attributes:
        achieved: number of disjoint trajectories selected
        selected: the partial ensemble
    """

    def __init__(self, achieved: int, requested: int, selected=None):
        self.achieved = achieved
        self.selected = list(selected or [])
        super().__init__(
            f"Trajectory pool exhausted after {achieved} of {requested} ships",
            ErrorType.PARTIAL_ENSEMBLE,
            {"achieved": achieved, "requested": requested},
        )


class NoFeasibleRingError(DysonRingError):
    """Raised when no ring configuration keeps any asteroid feasible."""

    def __init__(self, message: str = "No feasible ring configuration found"):
        super().__init__(message, ErrorType.NO_FEASIBLE_RING)


class StageDependencyError(DysonRingError):
    """Raised when a pipeline stage is missing an input artifact."""

    def __init__(self, stage: str, artifact: str, producer: str):
        self.producer = producer
        super().__init__(
            f"Stage '{stage}' needs '{artifact}', produced by stage '{producer}'",
            ErrorType.STAGE_DEPENDENCY,
            {"stage": stage, "artifact": artifact, "producer": producer},
        )


class ConfigError(DysonRingError):
    """Raised for malformed configuration files."""

    def __init__(self, message: str, keys: Optional[list] = None, **kwargs):
        super().__init__(
            message, ErrorType.INVALID_CONFIG, _details(keys=keys, **kwargs)
        )


class StageInterruptedError(DysonRingError):
    """Raised when a stop request ends a stage before its artifact is written."""

    def __init__(self, stage: str):
        self.stage = stage
        super().__init__(
            f"Stage '{stage}' stopped on request",
            ErrorType.INTERRUPTED,
            {"stage": stage},
        )
