from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Immutable batch of images with optional class labels.

    Writeable input arrays are copied and the copies made read-only.

    Attributes:
        images: N×C×H×W float array with values in [0, 1]
        labels: Optional integer array of length N
        split: "train" or "test"
        source: Human-readable origin (directory, generator name)
    """

    images: np.ndarray
    labels: Optional[np.ndarray] = None
    split: str = "train"
    source: str = ""

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataError(self.source, f"images must be N×C×H×W, got shape {self.images.shape}")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise DataError(self.source, "pixel values outside [0, 1]")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise DataError(self.source, f"{len(self.labels)} labels for {len(self.images)} images")
        for name in ("images", "labels"):
            array = getattr(self, name)
            if array is not None and array.flags.writeable:
                array = array.copy()
                array.setflags(write=False)
                object.__setattr__(self, name, array)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple:
        return self.images.shape[1:]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, indices: np.ndarray) -> "Dataset":
        """Dataset restricted to the given indices, in that order."""
        indices = np.asarray(indices, dtype=np.int64)
        labels = self.labels[indices] if self.labels is not None else None
        return Dataset(self.images[indices], labels, self.split, self.source)

    def limit(self, n: int) -> "Dataset":
        """First n examples (all of them when n is 0 or exceeds the size)."""
        if n <= 0 or n >= len(self):
            return self
        labels = self.labels[:n] if self.labels is not None else None
        return Dataset(self.images[:n], labels, self.split, self.source)

    def without_labels(self) -> "Dataset":
        return Dataset(self.images, None, self.split, self.source)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.images, np.asarray(labels, dtype=np.int64), self.split, self.source)

    def class_counts(self) -> Dict[int, int]:
        """Examples per label value."""
        if self.labels is None:
            return {}
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


@dataclass(frozen=True)
class LabeledSubset:
    """Stratified selection of labeled examples used for fine-tuning.

    Attributes:
        indices: Sorted, unique indices into the source dataset
        n_per_class: Examples drawn from every class
        seed: Seed the selection was drawn with
    """

    indices: np.ndarray
    n_per_class: int
    seed: int

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class BatchPlan:
    """How one epoch is cut into minibatches.

    Attributes:
        batch_size: Examples per batch
        seed: Shuffle seed; the permutation depends only on (seed, epoch)
        drop_last: Skip a final short batch
        epoch: Zero-based epoch counter
        shuffle: Permute the examples; otherwise keep dataset order
    """

    batch_size: int
    seed: int = 0
    drop_last: bool = False
    epoch: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class DatasetSummary:
    """Counts and pixel statistics reported by inspect-data.

    Attributes:
        split: Dataset split
        count: Number of images
        image_shape: C×H×W
        class_counts: Examples per class
        pixel_mean: Mean pixel intensity
        pixel_std: Pixel intensity standard deviation
    """

    split: str
    count: int
    image_shape: tuple
    class_counts: Dict[int, int] = field(default_factory=dict)
    pixel_mean: float = 0.0
    pixel_std: float = 0.0

    @classmethod
    def of(cls, ds: Dataset) -> "DatasetSummary":
        return cls(
            split=ds.split,
            count=len(ds),
            image_shape=ds.image_shape,
            class_counts=ds.class_counts(),
            pixel_mean=float(ds.images.mean()) if len(ds) else 0.0,
            pixel_std=float(ds.images.std()) if len(ds) else 0.0,
        )
