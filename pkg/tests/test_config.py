import json

import pytest

from nvquench.config import ENV_VAR, RunConfig, SimulationSettings, load_config
from nvquench.exceptions import ConfigError
from nvquench.spatial import ppm_to_density


def test_defaults():
    cfg = RunConfig()
    assert cfg.quench_params.is_published_set()
    assert cfg.sigma_nv is None and cfg.rho_c is None
    assert cfg.target_power == 50.0 and cfg.longpass_nm == 725.0


def test_round_trip():
    cfg = RunConfig(seed=7, sigma_nv=3.1e-17, sigma_nv_source="lab calibration",
                    simulation=SimulationSettings(density_ppm=20.0, n_jobs=2))
    back = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_digest_sensitive():
    assert RunConfig().digest() != RunConfig(seed=1).digest()
    assert RunConfig().digest() == RunConfig().digest()


def test_sim_config():
    sim = RunConfig(seed=3).sim_config(density_ppm=10.0)
    assert sim.density == pytest.approx(ppm_to_density(10.0))
    assert sim.seed == 3
    assert RunConfig().sim_config(seed=9).seed == 9


@pytest.mark.parametrize("data", [
    {"k0": 0},
    {"A": -1.0},
    {"alpha_err": -0.1},
    {"seed": -1},
    {"sigma_nv": 0.0},
    {"baseline_windows": [[1020, 1000]]},
    {"unknown": 1},
    {"simulation": {"n_jobs": 0}},
    {"simulation": {"bin_width": 0.3}},
    {"simulation": {"colour": "red"}},
    {"simulation": 3},
    [],
])
def test_invalid(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_load_file_and_env(tmp_path, monkeypatch):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 11}))
    assert load_config(path).seed == 11
    monkeypatch.setenv(ENV_VAR, str(path))
    assert load_config().seed == 11
    monkeypatch.delenv(ENV_VAR)
    assert load_config() == RunConfig()


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{seed: 1")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(bad)
