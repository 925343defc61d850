"""Stage orchestration: dataset, surrogate, mother ships, ring, schedule, score.

Each stage reads the artifacts of earlier stages from the run directory and
writes exactly one artifact of its own. A stage whose inputs are missing fails
with :class:`StageDependencyError` naming the stage that produces them, and a
run can be resumed from the first missing artifact.
"""

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from . import population as population_io
from .astro import RingConfig
from .batch import BatchRunner
from .cache import SolutionCache
from .config import PipelineConfig
from .constants import AU, KM, MISSION_END, M_MAX
from .ensemble import ensemble_select
from .exceptions import (
    DysonRingError,
    StageInterruptedError,
    TrainingFailedError,
)
from .legs import MothershipTrajectory, refine_trajectory, remove_asteroid
from .lrts import lrts_pool, rank_j_prime
from .population import Population, filter_by_arrival_quantile, generate_synthetic
from .result import Err, Ok, Result
from .ring import (
    TransferMatrix,
    activations_from_ensemble,
    build_transfer_matrix,
    optimize_ring_parameters,
    ring_objective,
)
from .scheduling import Schedule, greedy_escalation, optimize_windows
from .scoring import (
    ScoreBreakdown,
    Solution,
    ValidationReport,
    dv_factor,
    score,
    validate,
)
from .storage import STAGES, RunDirectory, read_json, write_json
from .surrogate import (
    RegressorModel,
    TransferTimeEstimator,
    build_training_db,
    load_db,
    save_db,
    train_correction,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class StageOutcome:
    """What a finished stage wrote, with a short summary for reports."""

    stage: str
    artifact: Path
    seconds: float
    summary: Dict[str, Any] = field(default_factory=dict)


@dataclass
class PipelineResult:
    run_dir: Path
    outcomes: List[StageOutcome]
    solution: Optional[Solution] = None
    breakdown: Optional[ScoreBreakdown] = None
    report: Optional[ValidationReport] = None

    @property
    def valid(self) -> bool:
        return self.report is not None and self.report.ok


class Pipeline:
    """Runs the stages of one run directory in order.

    Stages are idempotent: identical inputs and seed give identical artifacts.
    A stop request is honoured between batch items and generations; the
    interrupted stage writes nothing, so resuming starts again from it.
    """

    def __init__(
        self,
        config: Optional[PipelineConfig] = None,
        run_dir: Optional[Union[str, Path, RunDirectory]] = None,
        raise_errors: bool = False,
    ):
        """Initialize the orchestrator.

        Args:
            config: Run configuration (desk profile if omitted)
            run_dir: Existing run directory to work in; a fresh ``run-NNN``
                below ``config.runtime.out_dir`` is created when omitted
            raise_errors: If True, stage failures raise instead of being
                returned as ``Err``
        """
        self.config = config or PipelineConfig()
        self.raise_errors = raise_errors
        self._stop_requested = threading.Event()
        self._lock = threading.Lock()

        if run_dir is None:
            self.run = RunDirectory.create(self.config.runtime.out_dir)
        elif isinstance(run_dir, RunDirectory):
            self.run = run_dir
        else:
            self.run = RunDirectory.open(run_dir)
        self.config.save(self.run.config_path)

        self._pop: Optional[Population] = None
        self._estimator: Optional[TransferTimeEstimator] = None
        self._stages: Dict[str, Callable[[], Dict[str, Any]]] = {
            "gen-dataset": self._gen_dataset,
            "build-db": self._build_db,
            "train-surrogate": self._train_surrogate,
            "lrts": self._lrts,
            "ensemble": self._ensemble,
            "ring-params": self._ring_params,
            "transfer-matrix": self._transfer_matrix,
            "schedule": self._schedule,
            "score": self._score,
            "validate": self._validate,
        }

    @classmethod
    def resume(
        cls, run_dir: Union[str, Path], raise_errors: bool = False
    ) -> "Pipeline":
        """Reopen a run with the configuration it was started with."""
        run = RunDirectory.open(run_dir)
        config = PipelineConfig.load(run.config_path)
        return cls(config, run, raise_errors=raise_errors)

    # ------------------------------------------------------------------
    # Stop control
    # ------------------------------------------------------------------

    def request_stop(self):
        """Ask the running stage to stop at its next checkpoint."""
        self._stop_requested.set()
        logger.info("Stop requested")

    def reset_stop(self):
        self._stop_requested.clear()

    def should_stop(self) -> bool:
        return self._stop_requested.is_set()

    # ------------------------------------------------------------------
    # Running
    # ------------------------------------------------------------------

    def run_stage(self, name: str) -> Result[StageOutcome, DysonRingError]:
        """Run one stage and write its artifact.

        Artifacts of later stages are removed first, since they were built
        from inputs this stage is about to replace.
        """
        if name not in self._stages:
            raise KeyError(f"Unknown stage: {name}")
        handler = self._attach_log(name)
        start = time.perf_counter()
        try:
            for later in STAGES[STAGES.index(name) + 1 :]:
                self.run.discard(later)
            logger.info(f"Stage {name} started in {self.run.path}")
            summary = self._stages[name]()
            outcome = StageOutcome(
                name, self.run.artifact(name), time.perf_counter() - start, summary
            )
            logger.info(f"Stage {name} finished in {outcome.seconds:.1f} s")
            return Ok(outcome)
        except DysonRingError as e:
            logger.error(f"Stage {name} failed: {e}")
            return Err(e)
        except Exception as e:
            logger.error(f"Stage {name} raised unexpectedly: {e}", exc_info=True)
            return Err(DysonRingError(f"Stage '{name}' crashed: {e}"))
        finally:
            self._detach_log(handler)

    def run_stage_or_raise(self, name: str) -> StageOutcome:
        result = self.run_stage(name)
        if isinstance(result, Err):
            raise result.error
        return result.value

    def run_all(
        self,
        stages: Optional[List[str]] = None,
        on_stage: Optional[Callable[[str], None]] = None,
    ) -> Result[PipelineResult, DysonRingError]:
        """Run ``stages`` (all of them by default) and stop at the first error.

        ``on_stage`` is called with each stage name before it starts.
        """
        outcomes: List[StageOutcome] = []
        for name in STAGES if stages is None else stages:
            if self.should_stop():
                return self._failed(StageInterruptedError(name))
            if on_stage is not None:
                on_stage(name)
            result = self.run_stage(name)
            if isinstance(result, Err):
                return self._failed(result.error)
            outcomes.append(result.value)
        return Ok(self._collect(outcomes))

    def resume_all(
        self, on_stage: Optional[Callable[[str], None]] = None
    ) -> Result[PipelineResult, DysonRingError]:
        """Re-run the first stage without an artifact and everything after it."""
        first = self.run.first_missing()
        if first is None:
            logger.info(f"Run {self.run.path} is complete; nothing to resume")
            return Ok(self._collect([]))
        logger.info(f"Resuming {self.run.path} from stage {first}")
        return self.run_all(STAGES[STAGES.index(first) :], on_stage)

    def _failed(self, error: DysonRingError) -> Err:
        if self.raise_errors:
            raise error
        return Err(error)

    def _collect(self, outcomes: List[StageOutcome]) -> PipelineResult:
        result = PipelineResult(self.run.path, outcomes)
        if self.run.has("score"):
            result.solution = Solution.load(self.run.artifact("score"))
            result.breakdown = ScoreBreakdown(**read_json(self.run.score_path))
        if self.run.has("validate"):
            data = read_json(self.run.artifact("validate"))
            result.report = ValidationReport.from_dict(data)
        return result

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _attach_log(self, stage: str) -> logging.Handler:
        handler = logging.FileHandler(self.run.log_path(stage), mode="w")
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger("dyson_ring").addHandler(handler)
        return handler

    @staticmethod
    def _detach_log(handler: logging.Handler) -> None:
        logging.getLogger("dyson_ring").removeHandler(handler)
        handler.close()

    def _seed(self, stage: str) -> int:
        return self.config.runtime.seed + 1000 * STAGES.index(stage)

    def _runner(self) -> BatchRunner:
        return BatchRunner(self.config.runtime.workers, stop_event=self._stop_requested)

    def _check_stop(self, stage: str) -> None:
        if self.should_stop():
            raise StageInterruptedError(stage)

    def _population(self, stage: str) -> Population:
        with self._lock:
            if self._pop is None:
                path = self.run.require("gen-dataset", stage)
                self._pop = population_io.load(path)
            return self._pop

    def _estimator_for(self, stage: str) -> TransferTimeEstimator:
        with self._lock:
            if self._estimator is None:
                data = read_json(self.run.require("train-surrogate", stage))
                model = data.get("model")
                self._estimator = TransferTimeEstimator(
                    None if model is None else RegressorModel.from_dict(model)
                )
            return self._estimator

    def _ships(self, stage: str) -> List[MothershipTrajectory]:
        data = read_json(self.run.require("ensemble", stage))
        return [MothershipTrajectory.from_dict(t) for t in data["trajectories"]]

    def _ring(self, stage: str) -> RingConfig:
        data = read_json(self.run.require("ring-params", stage))
        return RingConfig(
            a_D=data["a_D"], i_D=data["i_D"], raan_D=data["raan_D"], phi1=data["phi1"]
        )

    def _cache(self) -> Optional[SolutionCache]:
        backend = self.config.runtime.cache
        if backend == "none":
            return None
        cache_dir = str(Path(self.config.runtime.out_dir) / "cache")
        return SolutionCache(backend=backend, cache_dir=cache_dir)

    # ------------------------------------------------------------------
    # Stages
    # ------------------------------------------------------------------

    def _gen_dataset(self) -> Dict[str, Any]:
        cfg = self.config.population
        if cfg.path:
            pop = population_io.load(cfg.path)
        else:
            pop = generate_synthetic(cfg.size, self._seed("gen-dataset"), cfg.model())
        population_io.save(pop, self.run.artifact("gen-dataset"))
        with self._lock:
            self._pop = pop
        return {"asteroids": len(pop), "source": pop.meta.get("source", "")}

    def _build_db(self) -> Dict[str, Any]:
        cfg = self.config.surrogate
        pop = self._population("build-db")
        db = []
        if cfg.enabled:
            db = build_training_db(
                pop,
                a_st_range=(cfg.a_st_min_au * AU, cfg.a_st_max_au * AU),
                n=cfg.db_size,
                seed=self._seed("build-db"),
                options=self.config.ocp.options(self._seed("build-db")),
                runner=self._runner(),
            )
        self._check_stop("build-db")
        save_db(db, self.run.artifact("build-db"))
        return {"samples": len(db)}

    def _train_surrogate(self) -> Dict[str, Any]:
        cfg = self.config.surrogate
        db = load_db(self.run.require("build-db", "train-surrogate"))
        model: Optional[RegressorModel] = None
        if cfg.enabled and db:
            try:
                model = train_correction(
                    db,
                    epochs=cfg.epochs,
                    seed=self._seed("train-surrogate"),
                    learning_rate=cfg.learning_rate,
                    batch_size=cfg.batch_size,
                    momentum=cfg.momentum,
                    hidden=cfg.hidden,
                    test_fraction=cfg.test_fraction,
                    patience=cfg.patience,
                )
            except TrainingFailedError as e:
                if e.checkpoint is None:
                    raise
                logger.warning(f"{e}; keeping the last stable checkpoint")
                model = e.checkpoint
        report = model.report.to_dict() if model and model.report else None
        write_json(
            self.run.artifact("train-surrogate"),
            {"model": None if model is None else model.to_dict(), "report": report},
        )
        with self._lock:
            self._estimator = TransferTimeEstimator(model)
        return {"corrected": model is not None, **(report or {})}

    def _lrts(self) -> Dict[str, Any]:
        cfg = self.config.search
        pop = self._population("lrts")
        estimator = self._estimator_for("lrts")
        candidates = filter_by_arrival_quantile(
            pop, cfg.a_D_au * AU, cfg.quantile, estimator
        )
        seed = self._seed("lrts")
        pool = lrts_pool(
            candidates,
            cfg.beam(),
            estimator,
            seeds=[seed + k for k in range(cfg.runs)],
            runner=self._runner(),
            stop_event=self._stop_requested,
        )
        self._check_stop("lrts")
        write_json(
            self.run.artifact("lrts"),
            {
                "trajectories": [t.to_dict() for t in pool.trajectories],
                "j_primes": pool.j_primes,
                "expansions": pool.expansions,
                "leg_solves": pool.leg_solves,
                "slices": pool.slices,
                "candidates": len(candidates),
            },
        )
        return {
            "trajectories": len(pool),
            "expansions": pool.expansions,
            "leg_solves": pool.leg_solves,
        }

    def _ensemble(self) -> Dict[str, Any]:
        cfg = self.config.ensemble
        search = self.config.search
        pop = self._population("ensemble")
        estimator = self._estimator_for("ensemble")
        data = read_json(self.run.require("lrts", "ensemble"))
        pool = [MothershipTrajectory.from_dict(t) for t in data["trajectories"]]
        j_primes = [float(j) for j in data["j_primes"]]
        seed = self._seed("ensemble")
        bounds = search.bounds()

        def rank(traj: MothershipTrajectory) -> float:
            return rank_j_prime(traj, search.a_D_au * AU, estimator, pop)

        def remove(traj: MothershipTrajectory, ast_id: int) -> MothershipTrajectory:
            out = remove_asteroid(
                traj, ast_id, pop, seed=seed, bounds=bounds, search=search.leg_search()
            )
            if cfg.refine:
                out = refine_trajectory(out, pop, cfg.refine_maxiter, bounds)
            return out

        J_init = max(j_primes, default=0.0)
        selected = ensemble_select(
            pool,
            J_init,
            cfg.delta_fraction * max(J_init, 1.0),
            seed=seed,
            rank=rank,
            remove=remove if cfg.repair else None,
            size=cfg.ships,
            j_primes=j_primes,
        )
        ships = selected.trajectories
        if cfg.refine:
            ships = [
                refine_trajectory(t, pop, cfg.refine_maxiter, bounds) for t in ships
            ]
        self._check_stop("ensemble")
        scores = [rank(t) for t in ships]
        write_json(
            self.run.artifact("ensemble"),
            {
                "trajectories": [t.to_dict() for t in ships],
                "j_primes": scores,
                "threshold": selected.threshold,
                "draws": selected.draws,
                "repairs": selected.repairs,
            },
        )
        return {
            "ships": len(ships),
            "asteroids": sum(len(t) for t in ships),
            "dv_km_s": [round(t.dv_total / KM, 4) for t in ships],
        }

    def _ring_params(self) -> Dict[str, Any]:
        cfg = self.config.ring
        pop = self._population("ring-params")
        estimator = self._estimator_for("ring-params")
        ships = self._ships("ring-params")
        A = activations_from_ensemble(ships, pop)
        factor = dv_factor([t.dv_total for t in ships])
        ring = optimize_ring_parameters(
            A,
            factor,
            estimator,
            seed=self._seed("ring-params"),
            popsize=cfg.popsize,
            maxiter=cfg.maxiter,
            sigma0=cfg.sigma0,
        )
        j_bar = ring_objective(A, ring, factor, estimator)
        write_json(
            self.run.artifact("ring-params"),
            {
                "a_D": ring.a_D,
                "i_D": ring.i_D,
                "raan_D": ring.raan_D,
                "phi1": ring.phi1,
                "J_bar": j_bar,
            },
        )
        return {"a_D_au": round(ring.radius_au, 5), "J_bar": j_bar}

    def _transfer_matrix(self) -> Dict[str, Any]:
        cfg = self.config.ring
        pop = self._population("transfer-matrix")
        estimator = self._estimator_for("transfer-matrix")
        ships = self._ships("transfer-matrix")
        ring = self._ring("transfer-matrix")
        cache = self._cache()
        stats: Optional[Dict[str, Any]] = None
        try:
            M = build_transfer_matrix(
                activations_from_ensemble(ships, pop),
                ring,
                estimator,
                t_f=MISSION_END,
                epsilon=cfg.epsilon,
                delta=cfg.delta,
                options=self.config.ocp.options(self._seed("transfer-matrix")),
                runner=self._runner(),
                cache=cache,
            )
        finally:
            if cache is not None:
                stats = cache.get_stats()
                cache.close()
        self._check_stop("transfer-matrix")
        write_json(self.run.artifact("transfer-matrix"), M.to_dict())
        summary: Dict[str, Any] = {
            "asteroids": len(M),
            "opportunities": M.opportunity_count,
            "empty_rows": len(M.empty_rows()),
        }
        if stats is not None:
            logger.info(
                f"Solution cache ({stats['backend']}): {stats['hits']} hits, "
                f"{stats['misses']} misses, {stats['size']} entries"
            )
            summary["cache_hit_rate"] = round(stats["hit_rate"], 1)
        return summary

    def _schedule(self) -> Dict[str, Any]:
        cfg = self.config.schedule
        data = read_json(self.run.require("transfer-matrix", "schedule"))
        M = TransferMatrix.from_dict(data)
        m_start, m_step = cfg.targets
        greedy, target = greedy_escalation(M, m_start, m_step, gap=cfg.gap)
        if greedy.partial:
            logger.warning("Greedy bootstrap left stations unbuilt")
        best: Schedule = optimize_windows(
            M,
            greedy.allocation,
            generations=cfg.generations,
            seed=self._seed("schedule"),
            islands=cfg.islands,
            pop_size=cfg.pop_size,
            inner_k=cfg.inner_k,
            post_k=cfg.post_k,
            gap=cfg.gap,
            stop_event=self._stop_requested,
        )
        self._check_stop("schedule")
        if best.M_min < greedy.M_min:
            logger.info("Keeping the greedy schedule; window search found no better")
            best = greedy
        write_json(
            self.run.artifact("schedule"),
            {
                "greedy_target": target,
                "greedy_M_min": greedy.M_min,
                "schedule": best.to_dict(),
            },
        )
        return {
            "greedy_M_min": greedy.M_min / M_MAX,
            "M_min": best.M_min / M_MAX,
            "stations_built": best.constructed,
        }

    def _score(self) -> Dict[str, Any]:
        pop = self._population("score")
        ships = self._ships("score")
        ring = self._ring("score")
        data = read_json(self.run.require("schedule", "score"))
        schedule = Schedule.from_dict(data["schedule"])
        visited = {a for t in ships for a in t.asteroid_ids}
        solution = Solution(
            ring,
            ships,
            schedule,
            pop.subset(visited | set(schedule.assignment), source="solution"),
            B=self.config.scoring.B,
        )
        breakdown = score(solution)
        solution.save(self.run.artifact("score"))
        write_json(self.run.score_path, breakdown.to_dict())
        return breakdown.to_dict()

    def _validate(self) -> Dict[str, Any]:
        cfg = self.config.scoring
        solution = Solution.load(self.run.require("score", "validate"))
        report = validate(
            solution,
            runner=self._runner(),
            gap=self.config.schedule.gap,
            position_tol=cfg.position_tol_km * KM,
            velocity_tol=cfg.velocity_tol_mps,
        )
        self._check_stop("validate")
        report.save(self.run.artifact("validate"))
        return {"ok": report.ok, "violations": len(report.violations)}


def run_stage(
    name: str,
    config: Optional[PipelineConfig] = None,
    run_dir: Optional[Union[str, Path]] = None,
) -> StageOutcome:
    """Run a single stage, raising on failure."""
    pipeline = Pipeline(config, run_dir, raise_errors=True)
    return pipeline.run_stage_or_raise(name)


def run_pipeline(
    config: Optional[PipelineConfig] = None,
    resume: Optional[Union[str, Path]] = None,
) -> Tuple[Solution, ScoreBreakdown]:
    """Run every stage (or resume a run) and return the scored solution."""
    if resume is not None:
        pipeline = Pipeline.resume(resume, raise_errors=True)
        result = pipeline.resume_all().unwrap()
    else:
        pipeline = Pipeline(config, raise_errors=True)
        result = pipeline.run_all().unwrap()
    if result.solution is None or result.breakdown is None:
        raise DysonRingError("Pipeline finished without a scored solution")
    return result.solution, result.breakdown
