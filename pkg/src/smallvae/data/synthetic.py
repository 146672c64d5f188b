"""Small deterministic image sets with known structure."""

import logging

import numpy as np

from ..models.dataset import Dataset
from ..utils.rng import stream

logger = logging.getLogger(__name__)

TWO_GAUSSIAN_MEANS = (0.3, 0.7)
TWO_GAUSSIAN_STD = 0.05


def _constant(n: int, channels: int, size: int, rng: np.random.Generator):
    return np.full((n, channels, size, size), 0.5), None


def _gradient_patterns(n: int, channels: int, size: int, rng: np.random.Generator):
    """Linear ramps in four orientations; the orientation is the label."""
    labels = rng.integers(0, 4, size=n)
    offsets = rng.uniform(0.0, 0.25, size=n)
    coords = np.arange(size) / max(size - 1, 1)
    rows, cols = np.meshgrid(coords, coords, indexing="ij")
    ramps = np.stack([rows, cols, (rows + cols) / 2, (rows + 1 - cols) / 2])
    images = 0.75 * ramps[labels] + offsets[:, None, None]
    images = np.repeat(images[:, None], channels, axis=1)
    return np.clip(images, 0.0, 1.0), labels


def _two_gaussians(n: int, channels: int, size: int, rng: np.random.Generator):
    """Two balanced classes of i.i.d. pixels around different mean intensities."""
    labels = rng.permutation(np.arange(n) % 2)
    means = np.asarray(TWO_GAUSSIAN_MEANS)[labels]
    noise = rng.normal(0.0, TWO_GAUSSIAN_STD, size=(n, channels, size, size))
    images = np.clip(means[:, None, None, None] + noise, 0.0, 1.0)
    threshold = sum(TWO_GAUSSIAN_MEANS) / 2
    predicted = (images.mean(axis=(1, 2, 3)) > threshold).astype(labels.dtype)
    accuracy = float((predicted == labels).mean())
    assert accuracy >= 0.99, f"two-gaussians threshold oracle only reaches {accuracy:.3f}"
    return images, labels


_GENERATORS = {
    "constant": _constant,
    "gradient-patterns": _gradient_patterns,
    "two-gaussians": _two_gaussians,
}


def synth_dataset(
    kind: str,
    n: int,
    size: int = 8,
    seed: int = 0,
    channels: int = 3,
    split: str = "train",
    dtype=np.float32,
) -> Dataset:
    """Generate n images of the given kind.

    Args:
        kind: "constant" (every pixel 0.5), "gradient-patterns" or "two-gaussians"
        n: Number of images, >= 1
        size: Image height and width
        seed: Generator seed; the split name is folded in so train and test differ
        channels: Image channels
        split: "train" or "test"
        dtype: Float dtype of the images
    """
    if n < 1:
        raise ValueError(f"synth_dataset: n must be >= 1, got {n}")
    if kind not in _GENERATORS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    rng = stream(seed, f"synthetic/{kind}/{split}")
    images, labels = _GENERATORS[kind](n, channels, size, rng)
    labels = labels.astype(np.int64) if labels is not None else None
    logger.debug(f"generated {n} {kind} images of size {size}")
    return Dataset(images.astype(dtype), labels, split=split, source=f"synthetic:{kind}")
