"""Tests for the CIFAR-10 binary parser."""

import os
from pathlib import Path

import numpy as np
import pytest

from src.smallvae.errors import DataError
from src.smallvae.parsers.cifar_parser import (
    RECORD_BYTES,
    TEST_FILES,
    TRAIN_FILES,
    CifarParser,
    load_cifar10,
)


def make_records(labels, fill=None):
    """CIFAR-style records: label byte, then R, G, B planes."""
    records = []
    for i, label in enumerate(labels):
        pixels = np.zeros((3, 32, 32), dtype=np.uint8)
        if fill is None:
            pixels[0] = 255
            pixels[1, 0, 1] = 51
            pixels[2] = i % 256
        else:
            pixels[:] = fill
        records.append(bytes([label]) + pixels.tobytes())
    return b"".join(records)


@pytest.fixture
def cifar_dir(tmp_path):
    """Directory with the six batch files, two records each."""
    for i, name in enumerate(TRAIN_FILES + TEST_FILES):
        (tmp_path / name).write_bytes(make_records([i % 10, (i + 1) % 10]))
    return tmp_path


def test_parse_batch_file(tmp_path):
    path = tmp_path / "data_batch_1.bin"
    path.write_bytes(make_records([3, 9]))

    images, labels = CifarParser.parse_batch_file(path)

    assert images.shape == (2, 3, 32, 32)
    assert images.dtype == np.float32
    assert labels.tolist() == [3, 9]
    assert (images[:, 0] == 1.0).all()
    assert images[0, 1, 0, 1] == pytest.approx(0.2)
    assert images[1, 2, 5, 5] == pytest.approx(1 / 255)


def test_parse_batch_file_float64(tmp_path):
    path = tmp_path / "b.bin"
    path.write_bytes(make_records([0], fill=128))
    images, _ = CifarParser.parse_batch_file(path, np.float64)
    assert images.dtype == np.float64
    assert images[0, 0, 0, 0] == 128 / 255


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing"):
        CifarParser.parse_batch_file(tmp_path / "nope.bin")


@pytest.mark.parametrize("size", [0, RECORD_BYTES - 1, RECORD_BYTES + 1])
def test_bad_file_size(tmp_path, size):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * size)
    with pytest.raises(DataError, match="multiple of 3073") as excinfo:
        CifarParser.parse_batch_file(path)
    assert excinfo.value.path == path


def test_label_out_of_range(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(make_records([1, 10]))
    with pytest.raises(DataError, match="record 1"):
        CifarParser.parse_batch_file(path)


def test_load_cifar10(cifar_dir):
    train, test = load_cifar10(cifar_dir)

    assert len(train) == 10 and len(test) == 2
    assert train.split == "train" and test.split == "test"
    assert train.labels.tolist()[:4] == [0, 1, 1, 2]
    assert test.labels.tolist() == [5, 6]


def test_load_cifar10_limits(cifar_dir):
    train, test = load_cifar10(cifar_dir, limit_train=3, limit_test=1)
    assert len(train) == 3 and len(test) == 1


def test_load_cifar10_missing_directory(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_cifar10(tmp_path / "absent")


def test_load_cifar10_missing_batch(cifar_dir):
    (cifar_dir / "data_batch_4.bin").unlink()
    with pytest.raises(DataError) as excinfo:
        load_cifar10(cifar_dir)
    assert excinfo.value.path.name == "data_batch_4.bin"


@pytest.mark.skipif("SMALLVAE_CIFAR_DIR" not in os.environ, reason="SMALLVAE_CIFAR_DIR not set")
def test_real_cifar10():
    train, test = load_cifar10(Path(os.environ["SMALLVAE_CIFAR_DIR"]))
    assert len(train) == 50_000 and len(test) == 10_000
    assert train.class_counts() == {label: 5000 for label in range(10)}
    assert 0.0 <= train.images.min() and train.images.max() <= 1.0
