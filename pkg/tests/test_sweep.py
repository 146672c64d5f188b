"""Tests for the latent-size sweep."""

import numpy as np
import pytest

from src.smallvae.data.synthetic import synth_dataset
from src.smallvae.errors import ConfigError, NonFiniteError
from src.smallvae.training import pipeline, sweep as sweep_module
from src.smallvae.training.sweep import THREADS_ENV, arm_dir, max_workers, sweep


@pytest.fixture
def data():
    train = synth_dataset("two-gaussians", 16, size=8, split="train", dtype=np.float64)
    test = synth_dataset("two-gaussians", 8, size=8, split="test", dtype=np.float64)
    return train, test


@pytest.fixture
def quick_cfg(toy_cfg):
    return toy_cfg.model_copy(
        update={
            "pretrain": toy_cfg.pretrain.model_copy(update={"epochs": 1}),
            "finetune": toy_cfg.finetune.model_copy(update={"epochs": 2, "labels_per_class": 2}),
        }
    )


def test_sweep_runs_every_arm(quick_cfg, data, tmp_path):
    train, test = data
    report = sweep(quick_cfg, train, test, spatial_sizes=[1, 2], out_dir=tmp_path)

    assert report.flat_sizes == [4, 16]
    assert not report.failures
    assert [row.labels_total for row in report.rows] == [4, 4]
    for flat in (4, 16):
        target = arm_dir(tmp_path, flat)
        for name in ("config_resolved.toml", "last.ckpt", "head.ckpt", "metrics_pretrain.csv", "density.csv"):
            assert (target / name).exists(), name
        assert len(report.pretrain_logs[flat]) == 1
        assert len(report.finetune_logs[flat]) == 2
    lines = (tmp_path / "sweep_report.csv").read_text().splitlines()
    assert lines[0] == "spatial,flat_size,labels_total,test_elbo,test_rmse,test_accuracy"
    assert len(lines) == 3


def test_sweep_rows_match_arm_logs(quick_cfg, data):
    train, test = data
    report = sweep(quick_cfg, train, test, spatial_sizes=[2])
    row = report.rows[0]
    final = report.pretrain_logs[16].last()

    assert row.test_elbo == final["test_total"]
    assert row.test_rmse == final["test_rmse"]
    assert 0.0 <= row.test_accuracy <= 1.0


def test_sweep_label_budgets(quick_cfg, data):
    train, test = data
    report = sweep(quick_cfg, train, test, spatial_sizes=[1], budgets=[2, 6])
    assert [row.labels_total for row in report.rows] == [4, 2, 6]


def test_parallel_sweep_matches_sequential(quick_cfg, data, monkeypatch):
    train, test = data
    monkeypatch.setenv(THREADS_ENV, "2")
    sequential = sweep(quick_cfg, train, test, spatial_sizes=[1, 2])
    parallel_cfg = quick_cfg.model_copy(update={"sweep": quick_cfg.sweep.model_copy(update={"parallel": True})})
    parallel = sweep(parallel_cfg, train, test, spatial_sizes=[1, 2])

    assert parallel.rows == sequential.rows


def test_failed_arm_does_not_stop_others(quick_cfg, data, monkeypatch, caplog):
    train, test = data
    real_pretrain = pipeline.pretrain

    def flaky(cfg, *args, **kwargs):
        if cfg.latent.spatial == 2:
            raise NonFiniteError("exp", (0,), "epoch 1 batch 0")
        return real_pretrain(cfg, *args, **kwargs)

    monkeypatch.setattr(pipeline, "pretrain", flaky)
    report = sweep(quick_cfg, train, test, spatial_sizes=[1, 2])

    assert report.flat_sizes == [4]
    assert "NonFiniteError" in report.failures[16]
    assert "sweep arm latent 16 failed" in caplog.text


def test_value_error_in_arm_is_recorded(quick_cfg, data, monkeypatch):
    train, test = data
    real_density = pipeline.density_table

    def failing(model, test, cfg):
        if cfg.latent.spatial == 2:
            raise ValueError("bandwidth is zero")
        return real_density(model, test, cfg)

    monkeypatch.setattr(pipeline, "density_table", failing)
    report = sweep(quick_cfg, train, test, spatial_sizes=[1, 2])

    assert report.flat_sizes == [4]
    assert report.failures[16] == "ValueError: bandwidth is zero"


def test_max_workers(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert max_workers() == 3

    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        max_workers()

    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(ConfigError):
        max_workers()

    monkeypatch.delenv(THREADS_ENV)
    monkeypatch.setattr(sweep_module.psutil, "cpu_count", lambda logical=True: None)
    assert max_workers() == 1
