"""Experiment configuration models.

Defaults reproduce the reference pre-training setup (Adam lr 1e-4, batch 16,
weight decay 1e-3, 100 epochs, 100 latent channels).
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class LatentConfig(_Section):
    """Shape of the latent tensor: channels × spatial × spatial.

    Attributes:
        channels: Latent channel count
        spatial: Latent height and width
    """

    channels: int = Field(default=100, gt=0)
    spatial: int = Field(default=8, ge=1)

    @property
    def flat_size(self) -> int:
        """Flattened latent size, channels·spatial²."""
        return self.channels * self.spatial * self.spatial


class ArchParams(_Section):
    """Dense-net encoder/decoder architecture.

    Attributes:
        in_channels: Image channels
        image_size: Image height and width
        stem_channels: Output channels of the 3×3 stem convolution
        growth_rate: Channels added by each dense-block layer
        block_layers: Layers per dense block
        num_stages: Number of [dense block, transition, stride-2] stages
        compression: Fraction of channels kept by each 1×1 transition
        logvar_init: Initial posterior log-variance (bias of the zero-weight logvar head)
    """

    in_channels: int = Field(default=3, gt=0)
    image_size: int = Field(default=32, gt=0)
    stem_channels: int = Field(default=32, gt=0)
    growth_rate: int = Field(default=12, gt=0)
    block_layers: int = Field(default=2, ge=0)
    num_stages: int = Field(default=2, ge=0)
    compression: float = Field(default=0.5, gt=0, le=1)
    logvar_init: float = Field(default=0.0, ge=-20, le=20)


class PretrainConfig(_Section):
    """VAE pre-training hyperparameters.

    Attributes:
        epochs: Training epochs
        lr: Initial Adam learning rate
        batch_size: Minibatch size
        weight_decay: Decoupled weight decay coefficient
        seed: Seed for the init/shuffle/noise streams
        recon: Reconstruction likelihood, "gaussian" (½·SSE) or "bernoulli"
        scheduler_factor: Plateau scheduler lr multiplier
        scheduler_patience: Non-improving epochs tolerated before a decay
        scheduler_threshold: Relative improvement that counts as progress
        min_lr: Learning-rate floor
        schedule: "plateau" to decay lr on a test-RMSE plateau, "constant" to keep it fixed
    """

    epochs: int = Field(default=100, gt=0)
    lr: float = Field(default=1e-4, gt=0)
    batch_size: int = Field(default=16, gt=0)
    weight_decay: float = Field(default=1e-3, ge=0)
    seed: int = Field(default=0, ge=0)
    recon: Literal["gaussian", "bernoulli"] = "gaussian"
    scheduler_factor: float = Field(default=0.5, gt=0, lt=1)
    scheduler_patience: int = Field(default=5, ge=0)
    scheduler_threshold: float = Field(default=1e-4, ge=0)
    min_lr: float = Field(default=1e-7, ge=0)
    schedule: Literal["plateau", "constant"] = "plateau"

    @model_validator(mode="after")
    def _lr_above_floor(self) -> "PretrainConfig":
        if self.lr < self.min_lr:
            raise ValueError(f"lr {self.lr} is below min_lr {self.min_lr}")
        return self


class FinetuneConfig(_Section):
    """Classifier-head fine-tuning hyperparameters.

    Attributes:
        epochs: Training epochs
        lr: Adam learning rate
        batch_size: Minibatch size
        labels_per_class: Labeled examples drawn per class
        weight_decay: Decoupled weight decay for the head
        seed: Seed for the subset/head-init/shuffle streams
        num_classes: Number of output logits
        hidden: Width of the hidden layer used for wide latents
        hidden_threshold: Flat latent size above which the hidden layer is added
    """

    epochs: int = Field(default=50, gt=0)
    lr: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=32, gt=0)
    labels_per_class: int = Field(default=100, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0)
    num_classes: int = Field(default=10, ge=2)
    hidden: int = Field(default=512, gt=0)
    hidden_threshold: int = Field(default=8192, gt=0)


class DataConfig(_Section):
    """Where images come from.

    Attributes:
        source: "cifar10" (binary archive in `dir`) or "synthetic"
        dir: CIFAR-10 directory holding the six .bin batch files
        limit_train: Use only the first N training images (0 = all)
        limit_test: Use only the first N test images (0 = all)
        synthetic_kind: Synthetic generator for source="synthetic"
        synthetic_train: Synthetic training-set size
        synthetic_test: Synthetic test-set size
        seed: Synthetic generator seed
    """

    source: Literal["cifar10", "synthetic"] = "cifar10"
    dir: str = ""
    limit_train: int = Field(default=0, ge=0)
    limit_test: int = Field(default=0, ge=0)
    synthetic_kind: Literal["constant", "gradient-patterns", "two-gaussians"] = "two-gaussians"
    synthetic_train: int = Field(default=256, gt=0)
    synthetic_test: int = Field(default=64, gt=0)
    seed: int = Field(default=0, ge=0)


class DensityConfig(_Section):
    """Pixel-intensity density estimates.

    Attributes:
        grid_points: Evaluation points over [0, 1]
        locations: (channel, row, col) pixels; empty means the four quarter points
        pooled: Also estimate channel 0 pooled over all pixels
        max_images: Cap on images used for the estimate (0 = all)
    """

    grid_points: int = Field(default=101, ge=2)
    locations: List[Tuple[int, int, int]] = Field(default_factory=list)
    pooled: bool = True
    max_images: int = Field(default=0, ge=0)

    def resolve_locations(self, channels: int, size: int) -> List[Tuple[int, int, int]]:
        """Return configured locations, or (0, s/4, s/4) … (0, 3s/4, 3s/4)."""
        if self.locations:
            return [tuple(loc) for loc in self.locations]
        lo, hi = size // 4, (3 * size) // 4
        return [(0, lo, lo), (0, lo, hi), (0, hi, lo), (0, hi, hi)]


class SweepConfig(_Section):
    """Latent-size sweep.

    Attributes:
        spatial_sizes: Latent spatial sizes, one arm each
        label_budgets: Total labeled counts to iterate during fine-tuning (empty = one point)
        parallel: Run arms concurrently (capped by SMALLVAE_THREADS)
    """

    spatial_sizes: List[int] = Field(default_factory=lambda: [8, 10, 12])
    label_budgets: List[int] = Field(default_factory=list)
    parallel: bool = False

    @field_validator("spatial_sizes")
    @classmethod
    def _sizes_positive(cls, value: List[int]) -> List[int]:
        if not value or any(s < 1 for s in value):
            raise ValueError("spatial_sizes must be a non-empty list of integers >= 1")
        return value

    @field_validator("label_budgets")
    @classmethod
    def _budgets_positive(cls, value: List[int]) -> List[int]:
        if any(b < 1 for b in value):
            raise ValueError("label_budgets must be positive")
        return value


class ExperimentConfig(_Section):
    """Complete, file-backed description of a run.

    Attributes:
        latent: Latent shape
        arch: Network architecture
        pretrain: Pre-training hyperparameters
        finetune: Fine-tuning hyperparameters
        data: Dataset source
        density: Density-estimate settings
        sweep: Latent-size sweep settings
        dtype: Floating-point precision of parameters and data
        output_dir: Run directory for metrics, checkpoints and resolved config
    """

    latent: LatentConfig = Field(default_factory=LatentConfig)
    arch: ArchParams = Field(default_factory=ArchParams)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    density: DensityConfig = Field(default_factory=DensityConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    dtype: Literal["float32", "float64"] = "float32"
    output_dir: str = "runs/default"

    @model_validator(mode="after")
    def _density_in_range(self) -> "ExperimentConfig":
        for c, h, w in self.density.locations:
            size = self.arch.image_size
            if not (0 <= c < self.arch.in_channels and 0 <= h < size and 0 <= w < size):
                raise ValueError(f"density location {(c, h, w)} outside image {self.arch.in_channels}x{size}x{size}")
        return self

    def with_spatial(self, spatial: int) -> "ExperimentConfig":
        """Copy of this config with a different latent spatial size."""
        latent = self.latent.model_copy(update={"spatial": spatial})
        return self.model_copy(update={"latent": latent})


def full_scale(cfg: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """The long-running reference setup: full CIFAR-10, 100 epochs, three latent sizes."""
    cfg = cfg or ExperimentConfig()
    data = cfg.data.model_copy(update={"source": "cifar10", "limit_train": 0, "limit_test": 0})
    pretrain = cfg.pretrain.model_copy(update={"epochs": 100, "lr": 1e-4, "batch_size": 16, "weight_decay": 1e-3})
    sweep = cfg.sweep.model_copy(update={"spatial_sizes": [8, 10, 12]})
    latent = cfg.latent.model_copy(update={"channels": 100})
    return cfg.model_copy(update={"data": data, "pretrain": pretrain, "sweep": sweep, "latent": latent})
