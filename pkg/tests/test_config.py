"""Tests for run configuration models and TOML handling."""

import tomllib

import pytest

from src.smallvae.errors import ConfigError, OutputError
from src.smallvae.models.config import DensityConfig, ExperimentConfig, LatentConfig, full_scale
from src.smallvae.parsers.config_parser import build_config, dump_run_config, load_run_config


def test_defaults_match_reference_setup():
    cfg = ExperimentConfig()
    assert cfg.pretrain.lr == 1e-4
    assert cfg.pretrain.batch_size == 16
    assert cfg.pretrain.weight_decay == 1e-3
    assert cfg.pretrain.epochs == 100
    assert cfg.latent.channels == 100
    assert cfg.sweep.spatial_sizes == [8, 10, 12]


@pytest.mark.parametrize("spatial,flat", [(8, 6400), (10, 10000), (12, 14400)])
def test_flat_sizes(spatial, flat):
    assert LatentConfig(spatial=spatial).flat_size == flat


def test_with_spatial_copies():
    cfg = ExperimentConfig()
    other = cfg.with_spatial(12)
    assert other.latent.spatial == 12
    assert cfg.latent.spatial == 8


def test_full_scale():
    cfg = full_scale(build_config({"pretrain": {"epochs": 2}, "data": {"limit_train": 100}}))
    assert cfg.pretrain.epochs == 100
    assert cfg.data.limit_train == 0
    assert cfg.data.source == "cifar10"


def test_default_density_locations():
    assert DensityConfig().resolve_locations(3, 32) == [(0, 8, 8), (0, 8, 24), (0, 24, 8), (0, 24, 24)]
    assert DensityConfig(locations=[(1, 2, 3)]).resolve_locations(3, 32) == [(1, 2, 3)]


def test_load_run_config(toy_toml):
    cfg = load_run_config(toy_toml)
    assert cfg.arch.image_size == 8
    assert cfg.latent.flat_size == 16
    assert cfg.dtype == "float64"
    assert cfg.data.source == "synthetic"


def test_overrides_take_precedence(toy_toml):
    cfg = load_run_config(toy_toml, {"pretrain.epochs": 7, "latent.spatial": None, "output_dir": "x"})
    assert cfg.pretrain.epochs == 7
    assert cfg.latent.spatial == 2
    assert cfg.output_dir == "x"


def test_defaults_without_file():
    assert load_run_config(None) == ExperimentConfig()


def test_unknown_key_is_named(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[pretrain]\nepochz = 3\n")
    with pytest.raises(ConfigError, match="unknown key 'pretrain.epochz'"):
        load_run_config(path)


def test_invalid_value_is_named():
    with pytest.raises(ConfigError, match="pretrain.lr"):
        build_config({"pretrain": {"lr": -1.0}})
    with pytest.raises(ConfigError, match="sweep.spatial_sizes"):
        build_config({}, {"sweep.spatial_sizes": []})


def test_density_location_outside_image():
    with pytest.raises(ConfigError, match="outside image"):
        build_config({"density": {"locations": [[0, 40, 0]]}})


def test_lr_below_floor_rejected():
    with pytest.raises(ConfigError, match="below min_lr"):
        build_config({"pretrain": {"lr": 1e-8, "min_lr": 1e-7}})


def test_schedule_choices():
    assert build_config({"pretrain": {"schedule": "constant"}}).pretrain.schedule == "constant"
    with pytest.raises(ConfigError, match="pretrain.schedule"):
        build_config({"pretrain": {"schedule": "cosine"}})


def test_override_through_scalar_rejected():
    with pytest.raises(ConfigError):
        build_config({"dtype": "float32"}, {"dtype.bits": 32})


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[pretrain\n")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_run_config(bad)


def test_dump_round_trip(tmp_path, toy_cfg):
    path = dump_run_config(toy_cfg, tmp_path / "out" / "config_resolved.toml")

    with open(path, "rb") as f:
        data = tomllib.load(f)
    assert data["latent"] == {"channels": 4, "spatial": 2}
    assert load_run_config(path) == toy_cfg
    assert not path.with_suffix(".toml.tmp").exists()


def test_dump_failure(tmp_path, toy_cfg):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError):
        dump_run_config(toy_cfg, blocker / "config_resolved.toml")
