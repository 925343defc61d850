"""Rich CLI interface for dyson-ring."""

import signal
import sys
import threading
from typing import List, Optional

from rich import box
from rich.console import Console
from rich.markdown import Markdown
from rich.panel import Panel
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TextColumn,
)
from rich.table import Table

from .cli import (
    EXIT_INVALID,
    EXIT_OK,
    EXIT_STAGE_ERROR,
    EXIT_STOPPED,
    build_parser,
    configure_logging,
    load_config,
    make_pipeline,
)
from .constants import DAY, M_MAX
from .exceptions import DysonRingError
from .pipeline import Pipeline, PipelineResult, StageOutcome
from .result import Err
from .scheduling import Schedule
from .scoring import ScoreBreakdown, ValidationReport
from .storage import STAGES

console = Console()

# Module-level reference so the signal handler can reach the active pipeline.
_active_pipeline: Optional[Pipeline] = None


def _signal_handler(signum: int, frame) -> None:  # noqa: ANN001
    """
    SIGINT handler.

    Requests a stop so batch runners skip their remaining items, then raises
    KeyboardInterrupt so the caller reports the resumable run directory.
    """
    if _active_pipeline is not None:
        _active_pipeline.request_stop()
    raise KeyboardInterrupt


class StopController:
    """Stdin listener that requests a stop on ``q`` + Enter (Rich styling)."""

    def __init__(self, pipeline: Pipeline) -> None:
        self._pipeline = pipeline
        self._active = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._pipeline.reset_stop()
        self._active.set()
        console.print("\n[dim]Press 'q' + Enter at any time to stop[/dim]\n")
        self._thread = threading.Thread(
            target=self._listen, daemon=True, name="RichStopListener"
        )
        self._thread.start()

    def _listen(self) -> None:
        while self._active.is_set():
            try:
                key = input().strip().lower()
                if key == "q":
                    console.print(
                        "\n[yellow]\u26a0[/yellow] Stop requested, "
                        "finishing current item..."
                    )
                    self._pipeline.request_stop()
                    self._active.clear()
                    break
            except EOFError:
                self._active.clear()
                break

    def stop(self) -> None:
        self._active.clear()


def print_welcome(pipeline: Pipeline) -> None:
    welcome = """
# dyson-ring \u2728

**Mother ships, asteroid transfers and a twelve-station ring**
    """
    console.print(Markdown(welcome))
    console.print(
        Panel(
            f"Run directory: [bold]{pipeline.run.path}[/bold]",
            style="bold cyan",
            box=box.ROUNDED,
        )
    )


def run_stages(pipeline: Pipeline, stages: List[str]):
    """Run ``stages`` under a progress bar; returns the pipeline Result."""
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=console,
    ) as progress:
        task = progress.add_task("[cyan]Starting...", total=len(stages))
        started: List[str] = []

        def on_stage(name: str) -> None:
            if started:
                progress.advance(task)
            started.append(name)
            progress.update(task, description=f"[cyan]{name}")

        result = pipeline.run_all(stages, on_stage=on_stage)
        if not isinstance(result, Err):
            progress.update(task, completed=len(stages), description="Done!")
    return result


def show_outcomes(outcomes: List[StageOutcome]) -> None:
    if not outcomes:
        return
    table = Table(title="\U0001f6f0 Stages", box=box.ROUNDED)
    table.add_column("Stage", style="cyan", no_wrap=True)
    table.add_column("Time", justify="right", style="magenta")
    table.add_column("Summary")
    for outcome in outcomes:
        details = ", ".join(f"{k}={v}" for k, v in outcome.summary.items())
        table.add_row(outcome.stage, f"{outcome.seconds:.1f} s", details)
    console.print(table)


def show_schedule(schedule: Schedule) -> None:
    table = Table(
        title=f"\U0001f3d7 Stations (M_min = {schedule.M_min / M_MAX:.3f} m_max)",
        box=box.ROUNDED,
    )
    table.add_column("Station", justify="right", style="cyan")
    table.add_column("Window (days)", justify="right")
    table.add_column("Asteroids", justify="right", style="green bold")
    table.add_column("Mass (m_max)", justify="right", style="magenta")
    masses = schedule.station_masses
    for j in schedule.allocation.order:
        begin, end = schedule.allocation.window(j)
        style = "bold red" if masses.get(j, 0.0) == schedule.M_min else None
        table.add_row(
            str(j),
            f"{begin / DAY:.0f} - {end / DAY:.0f}",
            str(len(schedule.asteroids_of(j))),
            f"{masses.get(j, 0.0) / M_MAX:.3f}",
            style=style,
        )
    console.print(table)


def show_score(breakdown: ScoreBreakdown) -> None:
    table = Table(title="\U0001f4ca Score", box=box.ROUNDED)
    table.add_column("Term", style="cyan")
    table.add_column("Value", justify="right", style="green bold")
    table.add_row("M_min (kg)", f"{breakdown.M_min:.6e}")
    table.add_row("a_D (AU)", f"{breakdown.a_D:.6f}")
    table.add_row("dv factor", f"{breakdown.dv_factor:.6f}")
    table.add_row("B", f"{breakdown.B:g}")
    table.add_row("J", f"{breakdown.J:.6f}")
    console.print(table)


def show_report(report: ValidationReport) -> None:
    if report.ok:
        console.print(
            f"\n[green]\u2713[/green] Validation passed "
            f"([bold]{report.transfers_checked}[/bold] transfers checked)"
        )
        return
    table = Table(
        title=f"[red]{len(report.violations)} violations[/red]", box=box.ROUNDED
    )
    table.add_column("Code", style="red")
    table.add_column("Asteroid", justify="right")
    table.add_column("Message")
    for v in report.violations:
        ast = "" if v.ast_id is None else str(v.ast_id)
        table.add_row(v.code.value, ast, v.message)
    console.print(table)


def show_result(result: PipelineResult) -> int:
    show_outcomes(result.outcomes)
    if result.solution is not None:
        show_schedule(result.solution.schedule)
    if result.breakdown is not None:
        show_score(result.breakdown)
    if result.report is not None:
        show_report(result.report)
        return EXIT_OK if result.report.ok else EXIT_INVALID
    return EXIT_OK


def _stopped_or_failed(pipeline: Pipeline, error: Optional[DysonRingError]) -> int:
    if pipeline.should_stop():
        console.print(
            "\n[yellow]\u26a0[/yellow] [bold]Operation stopped by user[/bold]; "
            f"resume with [cyan]--resume {pipeline.run.path}[/cyan]"
        )
        return EXIT_STOPPED
    console.print(f"\n[red]\u2717[/red] Stage failed: [bold]{error}[/bold]")
    return EXIT_STAGE_ERROR


def main(argv: Optional[List[str]] = None) -> None:
    """Rich CLI entry point."""
    global _active_pipeline

    parser = build_parser(prog="dyson-ring-rich")
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        config = load_config(args)
        if args.command == "show-config":
            console.print_json(data=config.to_dict())
            sys.exit(EXIT_OK)
        pipeline = make_pipeline(args, config)
    except (DysonRingError, FileNotFoundError) as exc:
        console.print(f"\n[red]\u2717[/red] [bold]{exc}[/bold]")
        sys.exit(EXIT_STAGE_ERROR)

    _active_pipeline = pipeline
    # Register SIGINT handler AFTER the pipeline exists so the stop reaches it.
    signal.signal(signal.SIGINT, _signal_handler)

    print_welcome(pipeline)
    ctrl = StopController(pipeline)
    if not args.no_input:
        ctrl.start()

    if args.command == "pipeline":
        first = pipeline.run.first_missing() if args.resume else STAGES[0]
        stages = [] if first is None else STAGES[STAGES.index(first) :]
    else:
        stages = [args.command]

    try:
        result = run_stages(pipeline, stages)
    except KeyboardInterrupt:
        pipeline.request_stop()
        result = Err(None)
    finally:
        ctrl.stop()

    if isinstance(result, Err):
        sys.exit(_stopped_or_failed(pipeline, result.error))

    sys.exit(show_result(result.value))


if __name__ == "__main__":
    main()
