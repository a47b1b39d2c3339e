import pytest

from hl3d.config import ConfigError, FitConfig, PipelineConfig, config_from_dict, load_config, with_overrides


def test_defaults():
    cfg = load_config(None)
    assert cfg == PipelineConfig()
    assert cfg.fit.tau_merge == 0.10
    assert cfg.graph.door_max_width == 1.5
    assert cfg.eval.f1_thresholds == (0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0)


def test_toml_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("seed = 4\n[fit]\nn_iters = 10\ntau_merge = 0.2\n[eval]\nmatching = 'greedy'\n")
    cfg = load_config(p)
    assert cfg.seed == 4
    assert cfg.fit.n_iters == 10 and cfg.fit.tau_merge == 0.2
    assert cfg.eval.matching == "greedy"


@pytest.mark.parametrize(
    "data",
    [{"bogus": 1}, {"fit": {"nope": 1}}, {"fit": {"n_iters": 1.5}}, {"fit": {"tau_merge": -1.0}}, {"eval": {"matching": "x"}}],
)
def test_rejects_bad_values(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/config.toml")


def test_overrides_keep_other_fields():
    cfg = with_overrides(PipelineConfig(fit=FitConfig(n_iters=3)), seed=9, threads=2)
    assert (cfg.seed, cfg.threads, cfg.fit.n_iters) == (9, 2, 3)
    assert with_overrides(cfg) == cfg


def test_to_dict_roundtrip():
    cfg = PipelineConfig(seed=3)
    assert config_from_dict(cfg.to_dict()) == cfg
