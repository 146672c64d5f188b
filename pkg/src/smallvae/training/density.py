"""Gaussian kernel density estimates of pixel intensities over [0, 1]."""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ShapeError
from ..models.metrics import DensityTable

logger = logging.getLogger(__name__)

MIN_BANDWIDTH = 1e-3
BINNED_ABOVE = 50_000
BINS = 4096


def bw_silverman(x: np.ndarray) -> float:
    """Silverman's rule, clamped below at 1e-3."""
    x_std = float(np.std(x))
    q75, q25 = np.percentile(x, [75, 25])
    x_iqr = float(q75 - q25)
    a = min(x_std, x_iqr / 1.34) if x_iqr > 0 else x_std
    bw = 0.9 * a * len(x) ** (-0.2)
    return max(bw, MIN_BANDWIDTH)


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    spacing = np.diff(grid)
    weights = np.zeros_like(grid)
    weights[:-1] += spacing / 2
    weights[1:] += spacing / 2
    return weights


def kde_unit_interval(samples: np.ndarray, grid: np.ndarray, bw: Optional[float] = None) -> np.ndarray:
    """Density of samples in [0, 1] on grid, reflected at both bounds and
    renormalized so its trapezoidal integral over grid is 1.

    Large sample sets are binned first; the bandwidth always uses the raw samples.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("kernel density estimate of an empty sample")
    bw = bw_silverman(samples) if bw is None else bw

    if samples.size > BINNED_ABOVE:
        counts, edges = np.histogram(samples, bins=BINS, range=(0.0, 1.0))
        centers = (edges[1:] + edges[:-1]) / 2
        points, weights = centers[counts > 0], counts[counts > 0].astype(np.float64)
    else:
        points, weights = samples, np.ones_like(samples)

    density = np.zeros_like(grid, dtype=np.float64)
    for mirrored in (points, -points, 2.0 - points):
        u = (grid[:, None] - mirrored[None, :]) / bw
        density += (np.exp(-0.5 * u * u) * weights[None, :]).sum(axis=1)
    density /= weights.sum() * bw * np.sqrt(2 * np.pi)

    trap = _trapezoid_weights(grid)
    mass = float(density @ trap)
    if mass <= 0 or not np.isfinite(mass):
        # every sample is far from every grid point: all mass on the nearest one
        density = np.zeros_like(grid, dtype=np.float64)
        nearest = int(np.argmin(np.abs(grid - np.median(samples))))
        density[nearest] = 1.0 / trap[nearest]
        return density
    return density / mass


def location_label(location: Tuple[int, int, int]) -> str:
    c, h, w = location
    return f"c{c}_h{h}_w{w}"


def pixel_density_estimate(
    inputs: np.ndarray,
    recons: np.ndarray,
    locations: Sequence[Tuple[int, int, int]],
    grid_points: int = 101,
    pooled: bool = True,
    pooled_channel: int = 0,
) -> DensityTable:
    """Per-location intensity densities across a dataset, for inputs and reconstructions.

    Args:
        inputs: N×C×H×W images
        recons: Reconstructions, same shape
        locations: (channel, row, col) pixels to estimate
        grid_points: Evaluation points over [0, 1]
        pooled: Also estimate pooled_channel over all pixels, labelled "c<k>_pooled"
        pooled_channel: Channel used for the pooled estimate

    Raises:
        ShapeError: If shapes differ or a location is out of range
        ValueError: If the dataset is empty
    """
    if inputs.shape != recons.shape:
        raise ShapeError(f"pixel_density_estimate: inputs {inputs.shape} vs recons {recons.shape}")
    if inputs.ndim != 4:
        raise ShapeError(f"pixel_density_estimate: expected N×C×H×W, got {inputs.shape}")
    if len(inputs) == 0:
        raise ValueError("pixel_density_estimate: empty dataset")
    _, channels, height, width = inputs.shape
    for c, h, w in locations:
        if not (0 <= c < channels and 0 <= h < height and 0 <= w < width):
            raise ShapeError(f"pixel_density_estimate: location {(c, h, w)} outside {inputs.shape[1:]}")

    grid = np.linspace(0.0, 1.0, grid_points)
    table = DensityTable(grid=grid)
    selections: List[Tuple[str, np.ndarray, np.ndarray]] = [
        (location_label(loc), inputs[:, loc[0], loc[1], loc[2]], recons[:, loc[0], loc[1], loc[2]])
        for loc in locations
    ]
    if pooled:
        selections.append((f"c{pooled_channel}_pooled", inputs[:, pooled_channel], recons[:, pooled_channel]))
    for label, x_in, x_rec in selections:
        table.labels.append(label)
        table.density_input[label] = kde_unit_interval(x_in, grid)
        table.density_recon[label] = kde_unit_interval(x_rec, grid)
    logger.debug(f"estimated {len(table.labels)} pixel densities from {len(inputs)} images")
    return table
