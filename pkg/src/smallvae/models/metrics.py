import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

PRETRAIN_COLUMNS = ("epoch", "train_total", "train_kl", "train_recon", "test_total", "test_rmse", "lr")
FINETUNE_COLUMNS = ("epoch", "train_ce", "test_ce", "test_accuracy", "lr")


@dataclass
class MetricsLog:
    """Per-epoch training curve.

    Attributes:
        kind: "pretrain" or "finetune"; selects the column set
        rows: One dict per epoch, keyed by the kind's columns
    """

    kind: str
    rows: List[Dict[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("pretrain", "finetune"):
            raise ValueError(f"unknown metrics kind {self.kind!r}")

    @property
    def columns(self) -> Tuple[str, ...]:
        return PRETRAIN_COLUMNS if self.kind == "pretrain" else FINETUNE_COLUMNS

    def append(self, **values: float) -> None:
        """Add the next epoch's row.

        Raises:
            ValueError: If columns differ, the epoch is not the next one, or a value is not finite
        """
        if set(values) != set(self.columns):
            raise ValueError(f"{self.kind} row needs columns {self.columns}, got {tuple(values)}")
        expected = len(self.rows) + 1
        if int(values["epoch"]) != expected:
            raise ValueError(f"{self.kind} epoch {values['epoch']} follows {expected - 1}")
        for key, value in values.items():
            if not math.isfinite(value):
                raise ValueError(f"{self.kind} metric {key} is not finite at epoch {expected}")
        self.rows.append({key: values[key] for key in self.columns})

    def column(self, name: str) -> List[float]:
        return [row[name] for row in self.rows]

    def last(self) -> Optional[Dict[str, float]]:
        return self.rows[-1] if self.rows else None

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class DensityTable:
    """Kernel density estimates of pixel intensities, inputs vs reconstructions.

    Attributes:
        grid: Evaluation points over [0, 1]
        labels: One label per estimated location, e.g. "c0_h8_w8" or "c0_pooled"
        density_input: Input-image density per label, each the size of grid
        density_recon: Reconstruction density per label
    """

    grid: np.ndarray
    labels: List[str] = field(default_factory=list)
    density_input: Dict[str, np.ndarray] = field(default_factory=dict)
    density_recon: Dict[str, np.ndarray] = field(default_factory=dict)

    def mass(self, label: str, which: str = "input") -> float:
        """Trapezoidal integral of one density over the grid."""
        values = self.density_input[label] if which == "input" else self.density_recon[label]
        return float(np.trapezoid(values, self.grid))


@dataclass
class SweepRow:
    """Outcome of one latent-size arm.

    Attributes:
        spatial: Latent spatial size
        flat_size: Flattened latent size
        test_elbo: Final per-example test ELBO loss
        test_rmse: Final test reconstruction RMSE
        test_accuracy: Fine-tuned classifier test accuracy
        labels_total: Labeled examples used for fine-tuning
    """

    spatial: int
    flat_size: int
    test_elbo: float
    test_rmse: float
    test_accuracy: float
    labels_total: int


@dataclass
class SweepReport:
    """Results across latent sizes.

    Attributes:
        rows: One row per successful arm (per labeled budget when iterating budgets)
        pretrain_logs: Pre-training curve per flat size
        finetune_logs: Fine-tuning curve per flat size
        densities: Density table per flat size
        failures: Error message per failed flat size
    """

    rows: List[SweepRow] = field(default_factory=list)
    pretrain_logs: Dict[int, MetricsLog] = field(default_factory=dict)
    finetune_logs: Dict[int, MetricsLog] = field(default_factory=dict)
    densities: Dict[int, DensityTable] = field(default_factory=dict)
    failures: Dict[int, str] = field(default_factory=dict)

    @property
    def flat_sizes(self) -> List[int]:
        return [row.flat_size for row in self.rows]
