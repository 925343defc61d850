"""Tests for pipeline configuration."""

import json

import pytest

from dyson_ring.config import PipelineConfig, SearchSection
from dyson_ring.constants import AU, DAY, M_MAX, YEAR
from dyson_ring.exceptions import ConfigError


class TestDefaults:
    """Default profile and derived objects."""

    def test_defaults_validate(self):
        config = PipelineConfig()
        assert config.runtime.seed == 0
        assert config.search.b == 5
        assert config.ensemble.ships == 2

    def test_beam_params(self):
        beam = SearchSection(b=3, g=4, a_D_au=1.2).beam()
        assert (beam.b, beam.g) == (3, 4)
        assert beam.a_D == pytest.approx(1.2 * AU)
        assert beam.bounds.launch_window == (0.0, 2.0 * YEAR)
        assert beam.search.pop_size == 30

    def test_derived_units(self):
        config = PipelineConfig()
        assert config.ring.epsilon == 20 * DAY
        assert config.schedule.gap == 90 * DAY
        assert config.schedule.targets == (9.0 * M_MAX, 0.05 * M_MAX)

    def test_ocp_options_carry_seed(self):
        assert PipelineConfig().ocp.options(seed=42).seed == 42

    def test_population_model(self):
        model = PipelineConfig().population.model()
        assert model.a_peaks_au == (2.33, 2.67, 3.15)


class TestValidation:
    @pytest.mark.parametrize(
        "section,key,value",
        [
            ("population", "size", 0),
            ("runtime", "workers", 0),
            ("runtime", "cache", "redis"),
            ("ensemble", "ships", 0),
            ("search", "runs", 0),
            ("search", "quantile", 1.0),
            ("ring", "delta", 1.0),
            ("surrogate", "patience", 0),
        ],
    )
    def test_rejects_bad_values(self, section, key, value):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({section: {key: value}})

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as exc_info:
            PipelineConfig.from_dict({"serach": {}})
        assert exc_info.value.details["keys"] == ["serach"]

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc_info:
            PipelineConfig.from_dict({"search": {"beam": 3}})
        assert exc_info.value.details["keys"] == ["search.beam"]

    def test_section_must_be_object(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"search": [1, 2]})

    def test_document_must_be_object(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict([])


class TestPersistence:
    """JSON files and overrides."""

    def test_save_and_load(self, tmp_path):
        config = PipelineConfig.from_dict({"search": {"b": 2, "g": 3}})
        path = tmp_path / "nested" / "config.json"
        config.save(path)
        loaded = PipelineConfig.load(path)
        assert loaded == config
        assert json.loads(path.read_text())["search"]["g"] == 3

    def test_partial_file_keeps_defaults(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"runtime": {"seed": 9}}))
        config = PipelineConfig.load(path)
        assert config.runtime.seed == 9
        assert config.search == SearchSection()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig.load(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{\n  'seed': 1\n}")
        with pytest.raises(ConfigError) as exc_info:
            PipelineConfig.load(path)
        assert exc_info.value.details["line"] == 2

    def test_with_runtime(self):
        config = PipelineConfig().with_runtime(seed=5, workers=3, out_dir="out")
        assert (config.runtime.seed, config.runtime.workers) == (5, 3)
        assert config.runtime.out_dir == "out"

    def test_with_runtime_keeps_unset(self):
        base = PipelineConfig.from_dict({"runtime": {"seed": 4}})
        assert base.with_runtime(workers=2).runtime.seed == 4

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("DYSON_RING_SEED", "17")
        monkeypatch.setenv("DYSON_RING_WORKERS", "2")
        monkeypatch.delenv("DYSON_RING_OUT_DIR", raising=False)
        config = PipelineConfig.from_env()
        assert config.runtime.seed == 17
        assert config.runtime.workers == 2
        assert config.runtime.out_dir == "runs"

    def test_from_env_bad_value(self, monkeypatch):
        monkeypatch.setenv("DYSON_RING_SEED", "seventeen")
        with pytest.raises(ConfigError):
            PipelineConfig.from_env()
