"""Tests for config loading and validation."""

from pathlib import Path

import pytest

from gdnm.config import (
    AppConfig,
    ConfigError,
    ExperimentConfig,
    ModelParams,
    Settings,
    _expand_path,
    _to_snake,
    experiment_config,
    load_config,
)


class TestExpandPath:
    def test_tilde_expansion(self):
        result = _expand_path("~/test")
        assert result == Path.home() / "test"

    def test_absolute_path(self, tmp_path):
        result = _expand_path(str(tmp_path / "foo"))
        assert result == tmp_path / "foo"


class TestToSnake:
    def test_camel_case(self):
        assert _to_snake("tGrid") == "t_grid"
        assert _to_snake("mcSteps") == "mc_steps"

    def test_already_snake(self):
        assert _to_snake("c_box") == "c_box"


class TestModelParams:
    def test_defaults(self):
        params = ModelParams()
        assert params.p == 0.5
        assert params.q == {1: 1.0}
        assert params.seed == 0

    def test_q_sorted_and_zero_entries_dropped(self):
        params = ModelParams(q={3: 0.25, 1: 0.75, 2: 0.0})
        assert list(params.q) == [1, 3]
        assert params.max_rank == 3
        assert params.min_rank == 1

    def test_q_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="model.q"):
            ModelParams(q={1: 0.5, 2: 0.4})

    def test_p_bounds(self):
        with pytest.raises(ConfigError, match="model.p"):
            ModelParams(p=1.0)
        with pytest.raises(ConfigError, match="model.p"):
            ModelParams(p=0.0)

    def test_rank_must_be_positive(self):
        with pytest.raises(ConfigError, match="ranks must be positive"):
            ModelParams(q={0: 1.0})

    def test_seed_range(self):
        with pytest.raises(ConfigError, match="model.seed"):
            ModelParams(seed=-1)
        with pytest.raises(ConfigError, match="model.seed"):
            ModelParams(seed=2**64)

    def test_with_seed(self):
        params = ModelParams(p=0.3, q={1: 0.5, 2: 0.5}, seed=1)
        other = params.with_seed(99)
        assert other.seed == 99
        assert other.q == params.q
        assert other.p == params.p


class TestSettings:
    def test_invalid_workers(self):
        with pytest.raises(ConfigError, match="workers"):
            Settings(workers=0)

    def test_invalid_confidence(self):
        with pytest.raises(ConfigError, match="confidence"):
            Settings(confidence=1.5)


class TestLoadConfig:
    def test_no_config_returns_defaults(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("HOME", str(tmp_path))
        config = load_config()
        assert isinstance(config, AppConfig)
        assert config.config_file_path is None
        assert config.model.q == {1: 1.0}
        assert config.settings.replicas == 1000
        assert config.experiments == {}

    def test_discovers_file_in_cwd(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        (tmp_path / "gdnm.yaml").write_text("model:\n  seed: 42\n", encoding="utf-8")
        config = load_config()
        assert config.model.seed == 42
        assert config.config_file_path == tmp_path / "gdnm.yaml"

    def test_load_full_config(self, tmp_path):
        config_file = tmp_path / "gdnm.yaml"
        config_file.write_text(
            """
model:
  p: 0.4
  q: {1: 0.5, 2: 0.5}
  seed: 7
settings:
  replicas: 50
  workers: 2
  chunkSize: 16
  outDir: ~/gdnm-results
  plot: true
experiments:
  tail:
    k: 2
    tGrid: [4, 16]
""",
            encoding="utf-8",
        )
        config = load_config(config_file)
        assert config.model.p == 0.4
        assert config.model.q == {1: 0.5, 2: 0.5}
        assert config.settings.replicas == 50
        assert config.settings.chunk_size == 16
        assert config.settings.out_dir == Path.home() / "gdnm-results"
        assert config.settings.plot is True
        assert config.experiments["tail"] == {"k": 2, "t_grid": [4, 16]}

    def test_bad_pmf_names_field(self, tmp_path):
        config_file = tmp_path / "gdnm.yaml"
        config_file.write_text("model:\n  q: {1: 0.5, 2: 0.4}\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=r"model\.q: probabilities sum to 0\.9"):
            load_config(config_file)

    def test_example_config_uses_full_separation_grids(self):
        example = Path(__file__).parents[1] / "gdnm.example.yaml"
        config = load_config(example)
        for name in ("crossing", "p00"):
            assert experiment_config(config, name).params["m_grid"] == list(range(1, 21))

    def test_quoted_plot_flag_rejected(self, tmp_path):
        config_file = tmp_path / "gdnm.yaml"
        config_file.write_text('settings:\n  plot: "false"\n', encoding="utf-8")
        with pytest.raises(ConfigError, match=r"settings\.plot: expected true or false"):
            load_config(config_file)

    def test_unknown_experiment(self, tmp_path):
        config_file = tmp_path / "gdnm.yaml"
        config_file.write_text("experiments:\n  nope: {}\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="Unknown experiment 'nope'"):
            load_config(config_file)

    def test_unknown_experiment_key(self, tmp_path):
        config_file = tmp_path / "gdnm.yaml"
        config_file.write_text("experiments:\n  tail:\n    bogus: 1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="unknown key 'bogus'"):
            load_config(config_file)

    def test_invalid_yaml(self, tmp_path):
        config_file = tmp_path / "gdnm.yaml"
        config_file.write_text("model: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="Invalid YAML"):
            load_config(config_file)

    def test_missing_explicit_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "missing.yaml")


class TestExperimentConfig:
    def test_defaults_merged_with_overrides(self):
        config = AppConfig(experiments={"tail": {"k": 3}})
        exp = experiment_config(config, "tail")
        assert exp.params["k"] == 3
        assert exp.params["t_grid"] == [64, 256, 1024, 4096]

    def test_cli_overrides(self, tmp_path):
        exp = experiment_config(
            AppConfig(), "p00", seed=9, workers=4, replicas=10, out_dir=tmp_path, plot=True
        )
        assert exp.model.seed == 9
        assert exp.workers == 4
        assert exp.replicas == 10
        assert exp.out_dir == tmp_path
        assert exp.plot is True

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError, match="nonempty list"):
            ExperimentConfig(name="tail", model=ModelParams(), params={"t_grid": []})

    def test_hash_ignores_workers_and_paths(self, tmp_path):
        a = experiment_config(AppConfig(), "tail", workers=1)
        b = experiment_config(AppConfig(), "tail", workers=8, out_dir=tmp_path)
        assert a.config_hash() == b.config_hash()

    def test_hash_depends_on_seed(self):
        a = experiment_config(AppConfig(), "tail", seed=1)
        b = experiment_config(AppConfig(), "tail", seed=2)
        assert a.config_hash() != b.config_hash()
