"""Tests for the Rich CLI module."""

from pathlib import Path
from unittest.mock import MagicMock, Mock, patch

import pytest

from dyson_ring import cli_rich
from dyson_ring.cli import EXIT_INVALID, EXIT_OK, EXIT_STAGE_ERROR, EXIT_STOPPED
from dyson_ring.cli_rich import (
    _signal_handler,
    _stopped_or_failed,
    main,
    print_welcome,
    run_stages,
    show_outcomes,
    show_report,
    show_result,
    show_score,
)
from dyson_ring.exceptions import DysonRingError, StageInterruptedError
from dyson_ring.pipeline import PipelineResult, StageOutcome
from dyson_ring.result import Err, Ok
from dyson_ring.scoring import ScoreBreakdown, ValidationReport, ViolationCode
from dyson_ring.storage import STAGES

# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(autouse=True)
def mock_console(monkeypatch):
    """Replace the module-level Console so no Rich output is produced."""
    mc = MagicMock()
    monkeypatch.setattr("dyson_ring.cli_rich.console", mc)
    return mc


@pytest.fixture()
def mock_progress():
    """Patch Progress so tests don't need a live terminal."""
    prog = MagicMock()
    prog.add_task.return_value = 0
    with patch("dyson_ring.cli_rich.Progress") as mock_cls:
        mock_cls.return_value.__enter__ = Mock(return_value=prog)
        mock_cls.return_value.__exit__ = Mock(return_value=False)
        yield prog


@pytest.fixture()
def pipeline(tmp_path):
    """A mock pipeline that calls on_stage for every stage it is given."""
    p = Mock()
    p.run.path = tmp_path / "run-001"
    p.should_stop.return_value = False

    def run_all(stages, on_stage=None):
        for name in stages:
            on_stage(name)
        return Ok(PipelineResult(tmp_path, []))

    p.run_all.side_effect = run_all
    return p


@pytest.fixture()
def no_signal():
    """Keep main() from installing a SIGINT handler in the test process."""
    with patch("dyson_ring.cli_rich.signal.signal") as sig:
        yield sig


def outcome(stage):
    return StageOutcome(stage, Path(f"{stage}.json"), 0.5, {"items": 1})


# ---------------------------------------------------------------------------
# Display helpers
# ---------------------------------------------------------------------------


def test_print_welcome_calls_console(mock_console, pipeline):
    print_welcome(pipeline)
    assert mock_console.print.call_count == 2


def test_show_outcomes_empty_prints_nothing(mock_console):
    show_outcomes([])
    mock_console.print.assert_not_called()


def test_show_outcomes_table(mock_console):
    show_outcomes([outcome("gen-dataset"), outcome("build-db")])
    table = mock_console.print.call_args[0][0]
    assert table.row_count == 2


def test_show_score(mock_console):
    show_score(ScoreBreakdown(2e15, 1.3, 19.0, 1.0, 6e3))
    assert mock_console.print.call_args[0][0].row_count == 5


def test_show_report_passed(mock_console):
    show_report(ValidationReport(transfers_checked=7))
    assert "Validation passed" in mock_console.print.call_args[0][0]


def test_show_report_violations(mock_console):
    report = ValidationReport()
    report.add(ViolationCode.WINDOW, "late", ast_id=3)
    report.add(ViolationCode.DV_LEDGER, "ledger", ship=0)
    show_report(report)
    assert mock_console.print.call_args[0][0].row_count == 2


class TestShowResult:
    def test_valid_result(self, tmp_path):
        result = PipelineResult(
            tmp_path,
            [outcome("validate")],
            breakdown=ScoreBreakdown(1e15, 1.2, 12.0, 1.0, 5e3),
            report=ValidationReport(transfers_checked=1),
        )
        assert show_result(result) == EXIT_OK

    def test_invalid_result(self, tmp_path):
        report = ValidationReport()
        report.add(ViolationCode.MASS_LEDGER, "mismatch")
        assert show_result(PipelineResult(tmp_path, [], report=report)) == EXIT_INVALID

    def test_partial_run(self, tmp_path):
        assert show_result(PipelineResult(tmp_path, [outcome("lrts")])) == EXIT_OK


# ---------------------------------------------------------------------------
# Running stages
# ---------------------------------------------------------------------------


class TestRunStages:
    def test_progress_advances_per_stage(self, mock_progress, pipeline):
        result = run_stages(pipeline, STAGES[:3])
        assert isinstance(result, Ok)
        assert mock_progress.advance.call_count == 2
        mock_progress.update.assert_called_with(0, completed=3, description="Done!")

    def test_error_result_passed_through(self, mock_progress, pipeline):
        pipeline.run_all.side_effect = None
        pipeline.run_all.return_value = Err(DysonRingError("bad"))
        result = run_stages(pipeline, ["lrts"])
        assert isinstance(result, Err)


class TestStoppedOrFailed:
    def test_stopped(self, mock_console, pipeline):
        pipeline.should_stop.return_value = True
        code = _stopped_or_failed(pipeline, StageInterruptedError("lrts"))
        assert code == EXIT_STOPPED
        assert "--resume" in mock_console.print.call_args[0][0]

    def test_failed(self, mock_console, pipeline):
        code = _stopped_or_failed(pipeline, DysonRingError("no ring"))
        assert code == EXIT_STAGE_ERROR
        assert "no ring" in mock_console.print.call_args[0][0]


def test_signal_handler_requests_stop(monkeypatch, pipeline):
    monkeypatch.setattr(cli_rich, "_active_pipeline", pipeline)
    with pytest.raises(KeyboardInterrupt):
        _signal_handler(2, None)
    pipeline.request_stop.assert_called_once()


# ---------------------------------------------------------------------------
# main
# ---------------------------------------------------------------------------


@pytest.mark.usefixtures("no_signal", "mock_progress")
class TestMain:
    """Exit codes and stage selection."""

    def run(self, argv, pipeline):
        with patch("dyson_ring.cli_rich.make_pipeline", return_value=pipeline):
            with pytest.raises(SystemExit) as exc_info:
                main(argv)
        return exc_info.value.code

    def test_show_config(self, mock_console, monkeypatch):
        monkeypatch.delenv("DYSON_RING_SEED", raising=False)
        with pytest.raises(SystemExit) as exc_info:
            main(["--seed", "4", "show-config"])
        assert exc_info.value.code == EXIT_OK
        data = mock_console.print_json.call_args.kwargs["data"]
        assert data["runtime"]["seed"] == 4

    def test_pipeline_runs_every_stage(self, pipeline):
        assert self.run(["pipeline", "--no-input"], pipeline) == EXIT_OK
        assert pipeline.run_all.call_args[0][0] == STAGES

    def test_resume_starts_at_first_missing(self, pipeline):
        pipeline.run.first_missing.return_value = "ensemble"
        self.run(["pipeline", "--resume", "r", "--no-input"], pipeline)
        expected = STAGES[STAGES.index("ensemble") :]
        assert pipeline.run_all.call_args[0][0] == expected

    def test_resume_of_complete_run(self, pipeline):
        pipeline.run.first_missing.return_value = None
        self.run(["pipeline", "--resume", "r", "--no-input"], pipeline)
        assert pipeline.run_all.call_args[0][0] == []

    def test_single_stage(self, pipeline):
        self.run(["schedule", "--no-input"], pipeline)
        assert pipeline.run_all.call_args[0][0] == ["schedule"]

    def test_stage_failure(self, pipeline):
        pipeline.run_all.side_effect = None
        pipeline.run_all.return_value = Err(DysonRingError("bad"))
        assert self.run(["lrts", "--no-input"], pipeline) == EXIT_STAGE_ERROR

    def test_keyboard_interrupt(self, pipeline):
        pipeline.run_all.side_effect = KeyboardInterrupt
        pipeline.should_stop.side_effect = lambda: pipeline.request_stop.called
        assert self.run(["lrts", "--no-input"], pipeline) == EXIT_STOPPED

    def test_missing_run_directory(self):
        with patch(
            "dyson_ring.cli_rich.make_pipeline",
            side_effect=FileNotFoundError("run-404"),
        ):
            with pytest.raises(SystemExit) as exc_info:
                main(["pipeline", "--resume", "run-404"])
        assert exc_info.value.code == EXIT_STAGE_ERROR

    def test_installs_sigint_handler(self, no_signal, pipeline):
        self.run(["lrts", "--no-input"], pipeline)
        assert no_signal.call_args[0][1] is _signal_handler
