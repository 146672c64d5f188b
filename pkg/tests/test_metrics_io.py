"""Tests for metrics logs and CSV emission."""

import numpy as np
import pytest

from src.smallvae.errors import OutputError
from src.smallvae.models.metrics import DensityTable, MetricsLog, SweepReport, SweepRow
from src.smallvae.utils.formatting import format_count, format_duration, format_metric, format_percent
from src.smallvae.utils.metrics_io import (
    read_metrics_csv,
    write_density_csv,
    write_metrics_csv,
    write_sweep_report,
)


def finetune_row(epoch, accuracy=0.5):
    return dict(epoch=epoch, train_ce=0.7, test_ce=0.69314718056, test_accuracy=accuracy, lr=1e-3)


def test_metrics_log_enforces_columns_and_order():
    log = MetricsLog("finetune")
    log.append(**finetune_row(1))

    with pytest.raises(ValueError, match="epoch"):
        log.append(**finetune_row(3))
    with pytest.raises(ValueError, match="columns"):
        log.append(epoch=2, train_ce=0.1)
    with pytest.raises(ValueError, match="not finite"):
        log.append(**{**finetune_row(2), "test_ce": float("nan")})
    assert len(log) == 1


def test_metrics_log_unknown_kind():
    with pytest.raises(ValueError):
        MetricsLog("sweep")


def test_write_metrics_csv(tmp_path):
    log = MetricsLog("finetune")
    log.append(**finetune_row(1, 0.25))
    log.append(**finetune_row(2, 0.75))

    path = write_metrics_csv(tmp_path / "metrics_finetune.csv", log)
    lines = path.read_bytes().decode().split("\n")

    assert lines[0] == "epoch,train_ce,test_ce,test_accuracy,lr"
    assert lines[1] == "1,0.7,0.693147181,0.25,0.001"
    assert lines[2].startswith("2,")
    assert lines[3] == ""
    assert b"\r" not in path.read_bytes()


def test_empty_log_writes_header_only(tmp_path):
    path = write_metrics_csv(tmp_path / "m.csv", MetricsLog("pretrain"))
    assert path.read_text() == "epoch,train_total,train_kl,train_recon,test_total,test_rmse,lr\n"


def test_read_metrics_csv_round_trip(tmp_path):
    log = MetricsLog("finetune")
    log.append(**finetune_row(1))
    write_metrics_csv(tmp_path / "m.csv", log)

    restored = read_metrics_csv(tmp_path / "m.csv", "finetune")
    assert restored.rows[0]["test_ce"] == pytest.approx(0.69314718056, rel=1e-8)
    assert restored.rows[0]["epoch"] == 1


def test_read_metrics_csv_errors(tmp_path):
    with pytest.raises(OutputError):
        read_metrics_csv(tmp_path / "absent.csv", "finetune")
    (tmp_path / "bad.csv").write_text("epoch,lr\n1,0.1\n")
    with pytest.raises(OutputError, match="malformed"):
        read_metrics_csv(tmp_path / "bad.csv", "finetune")


def test_write_failure_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError) as excinfo:
        write_metrics_csv(blocker / "m.csv", MetricsLog("pretrain"))
    assert excinfo.value.path == blocker / "m.csv"


def test_write_density_csv(tmp_path):
    grid = np.linspace(0, 1, 3)
    table = DensityTable(
        grid=grid,
        labels=["c0_h1_w1"],
        density_input={"c0_h1_w1": np.array([0.5, 1.0, 1.5])},
        density_recon={"c0_h1_w1": np.array([1.0, 1.0, 1.0])},
    )
    text = write_density_csv(tmp_path / "density.csv", table).read_text()
    assert text.splitlines() == [
        "grid,input_c0_h1_w1,recon_c0_h1_w1",
        "0,0.5,1",
        "0.5,1,1",
        "1,1.5,1",
    ]
    assert table.mass("c0_h1_w1") == pytest.approx(1.0)


def test_write_sweep_report(tmp_path):
    report = SweepReport(
        rows=[SweepRow(8, 6400, 512.25, 0.125, 0.4, 1000), SweepRow(10, 10000, 500.0, 0.1, 0.45, 1000)]
    )
    text = write_sweep_report(tmp_path / "sweep_report.csv", report).read_text()
    assert text.splitlines() == [
        "spatial,flat_size,labels_total,test_elbo,test_rmse,test_accuracy",
        "8,6400,1000,512.25,0.125,0.4",
        "10,10000,1000,500,0.1,0.45",
    ]
    assert report.flat_sizes == [6400, 10000]


def test_formatting_helpers():
    assert format_count(950) == "950"
    assert format_count(6400) == "6.4K"
    assert format_count(2_500_000) == "2.5M"
    assert format_metric(0.123456) == "0.1235"
    assert format_metric(None) == "-"
    assert format_metric(float("inf")) == "-"
    assert format_percent(0.953) == "95.3%"
    assert format_duration(12) == "12s"
    assert format_duration(125) == "2m 5s"
    assert format_duration(8100) == "2h 15m"
