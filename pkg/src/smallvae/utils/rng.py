"""Seeded random streams.

Every random draw comes from a named stream derived from one integer seed:
``SeedSequence([seed, crc32(name), *extra])``. A new stream name never
perturbs the values of existing streams.
"""

import json
import zlib
from typing import Sequence

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for (seed, name, extra...).

    Args:
        seed: Run seed
        name: Stream identifier such as "init", "shuffle" or "noise"
        extra: Further integers folded in, e.g. the epoch

    Returns:
        np.random.Generator: PCG64 generator
    """
    entropy = [int(seed), zlib.crc32(name.encode("utf-8")), *(int(e) for e in extra)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def box_muller(rng: np.random.Generator, shape: Sequence[int], dtype=np.float64) -> np.ndarray:
    """Standard-normal draws from pairs of uniforms via the Box-Muller transform."""
    n = int(np.prod(shape)) if len(shape) else 1
    half = (n + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1], keeps log finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    normals = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:n]
    return normals.reshape(tuple(shape)).astype(dtype, copy=False)


def rng_state(rng: np.random.Generator) -> str:
    """Serialize a generator's full bit-generator state as JSON."""
    return json.dumps(rng.bit_generator.state, sort_keys=True)


def restore_rng(state: str) -> np.random.Generator:
    """Inverse of rng_state."""
    bit_generator = np.random.PCG64()
    bit_generator.state = json.loads(state)
    return np.random.Generator(bit_generator)
