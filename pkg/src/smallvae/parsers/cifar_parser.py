"""Parser for the CIFAR-10 binary archive.

Each record is 3073 bytes: one label byte followed by 1024 red, 1024 green
and 1024 blue pixel bytes, each plane row-major 32×32.
"""

import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np

from ..errors import DataError
from ..models.dataset import Dataset

logger = logging.getLogger(__name__)

IMAGE_SIZE = 32
CHANNELS = 3
PIXELS = CHANNELS * IMAGE_SIZE * IMAGE_SIZE
RECORD_BYTES = 1 + PIXELS
NUM_CLASSES = 10
TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_FILES = ["test_batch.bin"]


class CifarParser:
    """Reads CIFAR-10 binary batch files into Datasets."""

    @staticmethod
    def parse_batch_file(file_path: Path, dtype=np.float32) -> Tuple[np.ndarray, np.ndarray]:
        """Parse one batch file.

        Args:
            file_path: Path to a `*.bin` batch file
            dtype: Float dtype of the returned images

        Returns:
            Tuple[np.ndarray, np.ndarray]: N×3×32×32 images in [0, 1] and N int64 labels

        Raises:
            DataError: If the file is missing, its size is not a multiple of 3073, or a label exceeds 9
        """
        try:
            raw = np.fromfile(file_path, dtype=np.uint8)
        except FileNotFoundError:
            raise DataError(file_path, "missing CIFAR-10 batch file") from None
        except OSError as e:
            raise DataError(file_path, f"cannot read: {e}") from e
        if raw.size == 0 or raw.size % RECORD_BYTES:
            raise DataError(file_path, f"size {raw.size} bytes is not a positive multiple of {RECORD_BYTES}")

        records = raw.reshape(-1, RECORD_BYTES)
        labels = records[:, 0].astype(np.int64)
        if labels.max() >= NUM_CLASSES:
            bad = int(np.flatnonzero(labels >= NUM_CLASSES)[0])
            raise DataError(file_path, f"label byte {labels[bad]} > 9 in record {bad}")
        pixels = records[:, 1:].reshape(-1, CHANNELS, IMAGE_SIZE, IMAGE_SIZE)
        images = pixels.astype(dtype) / np.asarray(255, dtype=dtype)
        return images, labels

    @staticmethod
    def parse_split(directory: Path, files: List[str], split: str, dtype=np.float32) -> Dataset:
        """Concatenate the named batch files of one split."""
        images, labels = [], []
        for name in files:
            batch_images, batch_labels = CifarParser.parse_batch_file(directory / name, dtype)
            images.append(batch_images)
            labels.append(batch_labels)
            logger.debug(f"parsed {len(batch_labels)} records from {directory / name}")
        return Dataset(np.concatenate(images), np.concatenate(labels), split=split, source=str(directory))


def load_cifar10(
    directory: Path | str,
    dtype=np.float32,
    limit_train: int = 0,
    limit_test: int = 0,
) -> Tuple[Dataset, Dataset]:
    """Load the train (data_batch_1..5) and test (test_batch) splits.

    Args:
        directory: Directory holding the six batch files
        dtype: Float dtype of the images
        limit_train: Keep only the first N training images (0 = all)
        limit_test: Keep only the first N test images (0 = all)

    Raises:
        DataError: If the directory or a batch file is missing or malformed
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(directory, "CIFAR-10 directory not found")
    train = CifarParser.parse_split(directory, TRAIN_FILES, "train", dtype).limit(limit_train)
    test = CifarParser.parse_split(directory, TEST_FILES, "test", dtype).limit(limit_test)
    logger.info(f"loaded CIFAR-10 from {directory}: {len(train)} train, {len(test)} test")
    return train, test
