"""Command-line interface for dyson-ring."""

import argparse
import json
import logging
import sys
import threading
from typing import List, Optional

from .config import PipelineConfig
from .exceptions import DysonRingError
from .pipeline import Pipeline, PipelineResult, StageOutcome
from .result import Err
from .scoring import ScoreBreakdown, ValidationReport
from .storage import STAGES, read_json

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_STAGE_ERROR = 2
EXIT_STOPPED = 130


class StopController:
    """
    Stdin listener that stops the pipeline when the user types ``q`` + Enter.

    Runs a single daemon thread blocked on ``input()``; the stage in progress
    finishes its current batch item and exits without writing its artifact.
    """

    def __init__(self, pipeline: Pipeline) -> None:
        self._pipeline = pipeline
        self._active = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        """Reset the pipeline stop flag and start the listener thread."""
        self._pipeline.reset_stop()
        self._active.set()
        print(
            "\n[i] Press 'q' + Enter at any time to stop; resume later with "
            f"--resume {self._pipeline.run.path}\n",
            flush=True,
        )
        self._thread = threading.Thread(
            target=self._listen, daemon=True, name="StopListener"
        )
        self._thread.start()

    def _listen(self) -> None:
        while self._active.is_set():
            try:
                key = input().strip().lower()
                if key == "q":
                    print("\n[!] Stop requested, finishing current item...", flush=True)
                    self._pipeline.request_stop()
                    self._active.clear()
                    break
            except EOFError:
                self._active.clear()
                break

    def stop(self) -> None:
        """Signal the listener to exit (non-blocking; thread is daemon)."""
        self._active.clear()


def configure_logging(verbose: int = 0, quiet: bool = False) -> None:
    if quiet:
        level = logging.WARNING
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    # Root stays at INFO or below so per-stage log files are complete; the
    # console handler applies the requested verbosity.
    logging.basicConfig(
        level=min(level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    for handler in logging.getLogger().handlers:
        handler.setLevel(level)


def build_parser(prog: str = "dyson-ring") -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=prog,
        description="Dyson-ring construction pipeline",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  dyson-ring pipeline                          # desk profile, new run directory
  dyson-ring --seed 7 --workers 8 pipeline     # another seed, 8 workers
  dyson-ring --config desk.json pipeline       # explicit configuration
  dyson-ring pipeline --resume runs/run-003    # continue an interrupted run
  dyson-ring schedule --resume runs/run-003    # re-run one stage
        """,
    )
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, help="parallel workers per stage")
    parser.add_argument("--out-dir", help="root directory for run directories")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="more log output"
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")

    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--resume", metavar="RUN_DIR", help="existing run directory")
        p.add_argument(
            "--no-input", action="store_true", help="do not listen for 'q' on stdin"
        )
    p = sub.add_parser("pipeline", help="run every stage in order")
    p.add_argument(
        "--resume", metavar="RUN_DIR", help="continue from the first missing artifact"
    )
    p.add_argument(
        "--no-input", action="store_true", help="do not listen for 'q' on stdin"
    )
    sub.add_parser("show-config", help="print the effective configuration")
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Configuration file (or defaults), then environment, then flags."""
    base = PipelineConfig.load(args.config) if args.config else None
    config = PipelineConfig.from_env(base)
    return config.with_runtime(args.seed, args.workers, args.out_dir)


def make_pipeline(args: argparse.Namespace, config: PipelineConfig) -> Pipeline:
    if getattr(args, "resume", None):
        if args.config or args.seed is not None or args.workers is not None:
            print(
                "[!] Resuming uses the run's stored configuration; "
                "--config/--seed/--workers are ignored",
                file=sys.stderr,
            )
        return Pipeline.resume(args.resume)
    return Pipeline(config)


def print_outcome(outcome: StageOutcome) -> None:
    details = ", ".join(f"{k}={v}" for k, v in outcome.summary.items())
    print(f"[\u2713] {outcome.stage} ({outcome.seconds:.1f} s) {details}")


def print_score(breakdown: ScoreBreakdown) -> None:
    print("\nScore:")
    print(f"  M_min:     {breakdown.M_min:.6e} kg")
    print(f"  a_D:       {breakdown.a_D:.6f} AU")
    print(f"  dv factor: {breakdown.dv_factor:.6f}")
    print(f"  B:         {breakdown.B:g}")
    print(f"  J:         {breakdown.J:.6f}")


def print_report(report: ValidationReport) -> None:
    if report.ok:
        print(f"\nValidation passed ({report.transfers_checked} transfers checked)")
        return
    print(f"\nValidation found {len(report.violations)} violations:")
    for v in report.violations:
        print(f"  [{v.code.value}] {v.message}")


def _finish(result: PipelineResult) -> int:
    if result.breakdown is not None:
        print_score(result.breakdown)
    if result.report is not None:
        print_report(result.report)
        return EXIT_OK if result.report.ok else EXIT_INVALID
    return EXIT_OK


def run_command(args: argparse.Namespace) -> int:
    config = load_config(args)
    if args.command == "show-config":
        print(json.dumps(config.to_dict(), indent=2))
        return EXIT_OK

    pipeline = make_pipeline(args, config)
    print(f"[i] Run directory: {pipeline.run.path}")
    ctrl = StopController(pipeline)
    if not args.no_input:
        ctrl.start()

    try:
        if args.command == "pipeline":
            if args.resume:
                result = pipeline.resume_all(on_stage=_announce)
            else:
                result = pipeline.run_all(on_stage=_announce)
            if isinstance(result, Err):
                return _failure(pipeline, result.error)
            for outcome in result.value.outcomes:
                print_outcome(outcome)
            return _finish(result.value)

        _announce(args.command)
        stage_result = pipeline.run_stage(args.command)
        if isinstance(stage_result, Err):
            return _failure(pipeline, stage_result.error)
        print_outcome(stage_result.value)
        if args.command == "validate":
            report = ValidationReport.from_dict(read_json(stage_result.value.artifact))
            print_report(report)
            return EXIT_OK if report.ok else EXIT_INVALID
        return EXIT_OK

    except KeyboardInterrupt:
        pipeline.request_stop()
        return _failure(pipeline, None)
    finally:
        ctrl.stop()


def _announce(stage: str) -> None:
    print(f"[>] {stage}", flush=True)


def _failure(pipeline: Pipeline, error: Optional[DysonRingError]) -> int:
    if pipeline.should_stop():
        print(
            f"\n[!] Operation stopped by user; resume with "
            f"--resume {pipeline.run.path}",
            file=sys.stderr,
        )
        return EXIT_STOPPED
    print(f"\n[\u2717] {error}", file=sys.stderr)
    return EXIT_STAGE_ERROR


def main(argv: Optional[List[str]] = None) -> None:
    """Console-script entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        code = run_command(args)
    except DysonRingError as e:
        print(f"\n[\u2717] {e}", file=sys.stderr)
        code = EXIT_STAGE_ERROR
    except FileNotFoundError as e:
        print(f"\n[\u2717] {e}", file=sys.stderr)
        code = EXIT_STAGE_ERROR
    sys.exit(code)


if __name__ == "__main__":
    main()
