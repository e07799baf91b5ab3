import pytest

from flakeseg.config import DEFAULTS, ENV_VAR, ConfigError, PipelineConfig


def write(tmp_path, text):
    p = tmp_path / "cfg.ini"
    p.write_text(text)
    return p


def test_defaults_and_overrides():
    cfg = PipelineConfig({"general": {"seed": "7"}, "train": {"weighted": "no"}})
    assert cfg.seed == 7 and cfg["train"]["weighted"] is False
    assert cfg["pso"] == DEFAULTS["pso"]
    cfg.set("pso", "n_agents", "4")
    assert cfg.swarm_config([(0, 1)]).n_agents == 4
    assert DEFAULTS["pso"]["n_agents"] != 4  # defaults are not mutated


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        PipelineConfig({"train": {"learnig_rate": "0.1"}})
    with pytest.raises(ConfigError, match="unknown section"):
        PipelineConfig({"trian": {}}).set("trian", "x", "1")


def test_type_errors():
    with pytest.raises(ConfigError, match="expected int"):
        PipelineConfig({"general": {"jobs": "many"}})
    with pytest.raises(ConfigError, match="boolean"):
        PipelineConfig({"enhance": {"enabled": "maybe"}})


def test_file_and_env(tmp_path, monkeypatch):
    p = write(tmp_path, "[general]\nseed = 11\n[cluster]\nk = 3\n")
    cfg = PipelineConfig.load(p)
    assert cfg.seed == 11 and cfg["cluster"]["k"] == 3
    monkeypatch.setenv(ENV_VAR, str(p))
    assert PipelineConfig.load().seed == 11
    monkeypatch.delenv(ENV_VAR)
    assert PipelineConfig.load().seed == DEFAULTS["general"]["seed"]


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        PipelineConfig.load(tmp_path / "missing.ini")
    with pytest.raises(ConfigError, match="cfg.ini"):
        PipelineConfig.load(write(tmp_path, "[quality]\nbogus = 1\n"))
    with pytest.raises(ConfigError):
        PipelineConfig.load(write(tmp_path, "seed = 1\n"))


def test_builders_carry_values():
    cfg = PipelineConfig({"general": {"size": "64", "seed": "5"}, "synth": {"n_images": "3"}})
    assert cfg.augment_config().crop_to == (64, 64)
    s = cfg.synth_config(width=32)
    assert (s.n_images, s.width, s.seed) == (3, 32, 5)
    assert cfg.classifier_params(beta=0.5)["beta"] == 0.5
    assert cfg.quality_config().grid == (cfg["quality"]["grid_rows"], cfg["quality"]["grid_cols"])
