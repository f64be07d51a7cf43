import json

import pytest

from foghorn.config import CONFIG_ENV, ConfigError, ToolConfig, load_config
from foghorn.imaging import CITYSCAPES_CAMERA


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_defaults(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    cfg = load_config()
    assert cfg == ToolConfig()
    assert cfg.camera == CITYSCAPES_CAMERA and cfg.filter.mu == 5 and cfg.completion.k == 2048
    assert cfg.parallelism >= 1


def test_file_and_env_fallback(tmp_path, monkeypatch):
    path = write(tmp_path, {"camera": {"baseline": 0.5, "focal_length": 100}, "filter": {"mu": 2},
                            "workers": 2, "seed": 7, "fog": {"atmospheric_light": [0.9, 0.9, 1.0]}})
    cfg = load_config(path)
    assert cfg.camera.baseline == 0.5 and cfg.filter.mu == 2 and cfg.parallelism == 2 and cfg.seed == 7
    assert cfg.fog.atmospheric_light == (0.9, 0.9, 1.0)
    monkeypatch.setenv(CONFIG_ENV, str(path))
    assert load_config() == cfg


def test_workers_do_not_enter_the_dict(tmp_path):
    a = load_config(write(tmp_path, {"workers": 1}, "a.json"))
    b = load_config(write(tmp_path, {"workers": 4}, "b.json"))
    assert a.to_dict() == b.to_dict()


def test_model_path_resolved_and_checked(tmp_path):
    (tmp_path / "m.json").write_text("{}")
    cfg = load_config(write(tmp_path, {"density_model": "m.json"}))
    assert cfg.density_model == str(tmp_path / "m.json")
    with pytest.raises(ConfigError, match="not found"):
        load_config(write(tmp_path, {"density_model": "absent.json"}, "bad.json"))


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"filter": {"sigma": 3}},
    {"filter": {"mu": -1}},
    {"camera": {"baseline": 0, "focal_length": 1}},
    {"fog": {"atmospheric_light": [2, 0, 0]}},
    {"workers": 0},
    {"completion": "k=3"},
])
def test_invalid_configs(tmp_path, data):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, data))


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")
