"""Tests for stage orchestration."""

from unittest.mock import DEFAULT, patch

import pytest

from dyson_ring.config import PipelineConfig
from dyson_ring.constants import DAY, M_MAX
from dyson_ring.exceptions import (
    DysonRingError,
    PartialEnsembleError,
    StageDependencyError,
    StageInterruptedError,
)
from dyson_ring.lrts import LRTSResult
from dyson_ring.pipeline import Pipeline, PipelineResult, run_stage
from dyson_ring.result import Err, Ok
from dyson_ring.ring import Opportunity, TransferMatrix
from dyson_ring.scheduling import ALL_STATIONS
from dyson_ring.storage import STAGES, read_json, write_json


@pytest.fixture
def config(tmp_path):
    return PipelineConfig.from_dict(
        {
            "population": {"size": 20},
            "surrogate": {"enabled": False},
            "schedule": {"m_start": 0.0, "generations": 0},
            "runtime": {"seed": 3, "out_dir": str(tmp_path / "runs")},
        }
    )


@pytest.fixture
def pipeline(config):
    return Pipeline(config)


def stub_stages(pipeline, calls, fail=None):
    """Replace every stage with one that records its name."""

    def make(name):
        def stage():
            calls.append(name)
            if name == fail:
                raise RuntimeError("stage blew up")
            return {"stage": name}

        return stage

    for name in STAGES:
        pipeline._stages[name] = make(name)


# ----------------------------------------------------------------------------
# Run directory handling
# ----------------------------------------------------------------------------


class TestPipelineSetup:
    def test_creates_run_directory(self, pipeline, tmp_path):
        assert pipeline.run.path == tmp_path / "runs" / "run-001"
        assert pipeline.run.config_path.is_file()

    def test_second_pipeline_gets_new_run(self, config, pipeline):
        assert Pipeline(config).run.path.name == "run-002"

    def test_stage_seeds_differ(self, pipeline):
        assert pipeline._seed("gen-dataset") == 3
        assert pipeline._seed("lrts") == 3 + 1000 * STAGES.index("lrts")

    def test_unknown_stage(self, pipeline):
        with pytest.raises(KeyError):
            pipeline.run_stage("launch")

    def test_resume_uses_stored_config(self, pipeline):
        resumed = Pipeline.resume(pipeline.run.path)
        assert resumed.config == pipeline.config
        assert resumed.run.path == pipeline.run.path


# ----------------------------------------------------------------------------
# Real stages
# ----------------------------------------------------------------------------


class TestEarlyStages:
    """Dataset and surrogate stages with the correction disabled."""

    def test_gen_dataset(self, pipeline):
        outcome = pipeline.run_stage_or_raise("gen-dataset")
        assert outcome.summary == {"asteroids": 20, "source": "synthetic"}
        assert outcome.artifact.is_file()
        assert pipeline.run.log_path("gen-dataset").is_file()

    def test_same_seed_same_dataset(self, config):
        first = Pipeline(config)
        second = Pipeline(config)
        first.run_stage_or_raise("gen-dataset")
        second.run_stage_or_raise("gen-dataset")
        a = first.run.artifact("gen-dataset").read_text()
        b = second.run.artifact("gen-dataset").read_text()
        assert a == b

    def test_disabled_surrogate(self, pipeline):
        result = pipeline.run_all(STAGES[:3])
        assert isinstance(result, Ok)
        assert [o.stage for o in result.value.outcomes] == STAGES[:3]
        assert result.value.outcomes[1].summary == {"samples": 0}
        data = read_json(pipeline.run.artifact("train-surrogate"))
        assert data["model"] is None
        assert not pipeline._estimator_for("lrts").corrected

    def test_lrts_writes_pool(self, pipeline):
        pipeline.run_all(STAGES[:3])
        with patch(
            "dyson_ring.pipeline.lrts_pool", return_value=LRTSResult([], [], 4, 9, 2)
        ) as pool:
            outcome = pipeline.run_stage_or_raise("lrts")
        assert outcome.summary == {"trajectories": 0, "expansions": 4, "leg_solves": 9}
        seeds = pool.call_args.kwargs["seeds"]
        assert seeds == [pipeline._seed("lrts")]
        data = read_json(pipeline.run.artifact("lrts"))
        assert data["slices"] == 2
        assert 0 < data["candidates"] <= 20

    def test_empty_pool_is_partial_ensemble(self, pipeline):
        pipeline.run_all(STAGES[:3])
        with patch("dyson_ring.pipeline.lrts_pool", return_value=LRTSResult([], [])):
            pipeline.run_stage_or_raise("lrts")
        result = pipeline.run_stage("ensemble")
        assert isinstance(result, Err)
        assert isinstance(result.error, PartialEnsembleError)
        assert not pipeline.run.has("ensemble")

    def test_schedule_from_matrix_artifact(self, pipeline):
        M = TransferMatrix()
        for j in ALL_STATIONS:
            base = (j - 1) * 200 * DAY
            M.add(2 * j - 1, j, Opportunity(base + 10 * DAY, 1e13))
            M.add(2 * j, j, Opportunity(base + 20 * DAY, 1e13))
        write_json(pipeline.run.artifact("transfer-matrix"), M.to_dict())
        outcome = pipeline.run_stage_or_raise("schedule")
        assert outcome.summary["M_min"] == pytest.approx(2e13 / M_MAX)
        assert outcome.summary["stations_built"] == 12
        data = read_json(pipeline.run.artifact("schedule"))
        assert data["schedule"]["M_min"] == pytest.approx(2e13)

    def test_transfer_matrix_reports_cache_use(self, pipeline):
        def build(activations, ring, estimator, cache=None, **kwargs):
            for _ in range(2):
                cache.get_or_compute(cache.make_key("row", 1), lambda: 1.0)
            M = TransferMatrix()
            M.add(1, 1, Opportunity(10 * DAY, 1e13))
            return M

        names = ["_population", "_estimator_for", "_ships", "_ring"]
        inputs = dict.fromkeys(names, DEFAULT)
        with patch.multiple(pipeline, **inputs), patch(
            "dyson_ring.pipeline.activations_from_ensemble"
        ), patch("dyson_ring.pipeline.build_transfer_matrix", side_effect=build):
            outcome = pipeline.run_stage_or_raise("transfer-matrix")
        assert outcome.summary["opportunities"] == 1
        assert outcome.summary["cache_hit_rate"] == 50.0


# ----------------------------------------------------------------------------
# Orchestration
# ----------------------------------------------------------------------------


class TestOrchestration:
    """Dependencies, stop requests and resume."""

    def test_missing_input_names_producer(self, pipeline):
        result = pipeline.run_stage("ring-params")
        assert isinstance(result, Err)
        assert isinstance(result.error, StageDependencyError)
        assert result.error.producer == "gen-dataset"

    def test_run_stage_helper_raises(self, config):
        with pytest.raises(StageDependencyError):
            run_stage("schedule", config)

    def test_rerun_discards_later_artifacts(self, pipeline):
        for stage in ("lrts", "ensemble", "validate"):
            write_json(pipeline.run.artifact(stage), {})
        pipeline.run_stage_or_raise("gen-dataset")
        assert not any(pipeline.run.has(s) for s in ("lrts", "ensemble", "validate"))

    def test_crash_becomes_error(self, pipeline):
        calls = []
        stub_stages(pipeline, calls, fail="lrts")
        result = pipeline.run_all()
        assert isinstance(result, Err)
        assert isinstance(result.error, DysonRingError)
        assert "crashed" in result.error.message
        assert calls == STAGES[: STAGES.index("lrts") + 1]

    def test_stop_before_next_stage(self, pipeline):
        calls = []
        stub_stages(pipeline, calls)
        pipeline.request_stop()
        result = pipeline.run_all()
        assert isinstance(result.error, StageInterruptedError)
        assert result.error.stage == "gen-dataset"
        assert calls == []
        pipeline.reset_stop()
        assert not pipeline.should_stop()

    def test_stop_raises_when_requested(self, config):
        pipeline = Pipeline(config, raise_errors=True)
        pipeline.request_stop()
        with pytest.raises(StageInterruptedError):
            pipeline.run_all()

    def test_on_stage_callback(self, pipeline):
        calls, seen = [], []
        stub_stages(pipeline, calls)
        result = pipeline.run_all(STAGES[:2], on_stage=seen.append)
        assert isinstance(result.value, PipelineResult)
        assert seen == STAGES[:2]

    def test_resume_from_first_missing(self, pipeline):
        pipeline.run_stage_or_raise("gen-dataset")
        resumed = Pipeline.resume(pipeline.run.path)
        calls = []
        stub_stages(resumed, calls)
        result = resumed.resume_all()
        assert isinstance(result, Ok)
        assert calls == STAGES[1:]

    def test_resume_complete_run(self, pipeline, monkeypatch):
        calls = []
        stub_stages(pipeline, calls)
        monkeypatch.setattr(pipeline.run, "first_missing", lambda: None)
        result = pipeline.resume_all()
        assert result.value.outcomes == []
        assert calls == []
        assert not result.value.valid
