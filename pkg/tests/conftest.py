"""Shared fixtures: a toy architecture small enough to train in seconds."""

import pytest

from src.smallvae.models.config import ExperimentConfig
from src.smallvae.parsers.config_parser import build_config

TOY = {
    "arch": {"image_size": 8, "stem_channels": 4, "growth_rate": 4, "block_layers": 1, "num_stages": 1},
    "latent": {"channels": 4, "spatial": 2},
    "pretrain": {"epochs": 2, "batch_size": 8, "lr": 1e-3},
    "finetune": {"epochs": 5, "batch_size": 8, "labels_per_class": 4, "lr": 1e-2},
    "data": {"source": "synthetic", "synthetic_kind": "two-gaussians", "synthetic_train": 32, "synthetic_test": 16},
}

TOY_TOML = """
dtype = "float64"

[arch]
image_size = 8
stem_channels = 4
growth_rate = 4
block_layers = 1
num_stages = 1

[latent]
channels = 4
spatial = 2

[pretrain]
epochs = 1
batch_size = 8
lr = 1e-3

[finetune]
epochs = 2
batch_size = 8
labels_per_class = 4

[data]
source = "synthetic"
synthetic_kind = "two-gaussians"
synthetic_train = 32
synthetic_test = 16
"""


@pytest.fixture
def toy_cfg(tmp_path) -> ExperimentConfig:
    """Toy float64 config writing into a temporary run directory."""
    return build_config(TOY, {"dtype": "float64", "output_dir": str(tmp_path / "run")})


@pytest.fixture
def toy_cfg32(tmp_path) -> ExperimentConfig:
    return build_config(TOY, {"dtype": "float32", "output_dir": str(tmp_path / "run")})


@pytest.fixture
def toy_toml(tmp_path):
    """Path of a TOML run file describing the toy setup."""
    path = tmp_path / "toy.toml"
    path.write_text(TOY_TOML)
    return path
