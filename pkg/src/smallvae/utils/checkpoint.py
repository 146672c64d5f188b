"""VAECKPT1 checkpoint container.

Layout, all integers little-endian:

    magic      8 bytes  b"VAECKPT1"
    version    u32      1
    meta_len   u64      byte length of the metadata block
    metadata   UTF-8    sorted "key=value\\n" lines
    count      u32      number of tensor entries
    entries    count × {name_len u32, name UTF-8, dtype tag u8 (1=f32, 2=f64),
                        ndim u32, dims u64[ndim], payload little-endian floats}

Nothing may follow the last entry.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import CheckpointError
from ..models.config import ExperimentConfig
from ..models.vae_model import VaeModel, build_model
from ..nn.networks import ClassifierHead, build_classifier
from ..training.optim import AdamState

logger = logging.getLogger(__name__)

MAGIC = b"VAECKPT1"
VERSION = 1
DTYPE_TAGS = {4: 1, 8: 2}
TAG_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


@dataclass
class Checkpoint:
    """Named tensors plus string metadata.

    Attributes:
        tensors: Arrays keyed by name, written in sorted name order
        metadata: Single-line string values keyed by name
    """

    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    metadata: Dict[str, str] = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint, path: Path | str = "<memory>") -> bytes:
    """Serialize to the VAECKPT1 byte layout.

    Raises:
        CheckpointError: If a tensor dtype or metadata entry cannot be represented
    """
    lines = []
    for key in sorted(ckpt.metadata):
        value = ckpt.metadata[key]
        if "=" in key or "\n" in key or "\n" in value:
            raise CheckpointError(path, f"metadata entry {key!r} must be a single line with no '=' in the key")
        lines.append(f"{key}={value}\n")
    meta = "".join(lines).encode("utf-8")

    parts = [MAGIC, struct.pack("<IQ", VERSION, len(meta)), meta, struct.pack("<I", len(ckpt.tensors))]
    for name in sorted(ckpt.tensors):
        array = np.asarray(ckpt.tensors[name])
        tag = DTYPE_TAGS.get(array.dtype.itemsize) if array.dtype.kind == "f" else None
        if tag is None:
            raise CheckpointError(path, f"tensor {name!r} has unsupported dtype {array.dtype}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BI", tag, array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=TAG_DTYPES[tag]).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, path: Path | str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.offset + n
        if end > len(self.data):
            raise CheckpointError(
                self.path,
                f"truncated {what}: needs {n} bytes at offset {self.offset}, file has {len(self.data)}",
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes, path: Path | str = "<memory>") -> Checkpoint:
    """Parse VAECKPT1 bytes.

    Raises:
        CheckpointError: On bad magic, unknown version, unknown dtype tag,
            truncation, or trailing bytes
    """
    reader = _Reader(data, path)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(path, "bad magic")
    (version,) = reader.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(path, f"unsupported checkpoint version {version}")
    (meta_len,) = reader.unpack("<Q", "metadata length")
    try:
        text = reader.take(meta_len, "metadata").decode("utf-8")
    except UnicodeDecodeError as e:
        raise CheckpointError(path, f"metadata is not UTF-8: {e}") from None
    if text and not text.endswith("\n"):
        raise CheckpointError(path, "metadata block does not end with a newline")
    metadata = {}
    for line in text.split("\n")[:-1] if text else []:
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(path, f"malformed metadata line {line!r}")
        metadata[key] = value

    (count,) = reader.unpack("<I", "entry count")
    tensors: Dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = reader.unpack("<I", f"entry {i} name length")
        name = reader.take(name_len, f"entry {i} name").decode("utf-8", errors="replace")
        tag, ndim = reader.unpack("<BI", f"{name} header")
        if tag not in TAG_DTYPES:
            raise CheckpointError(path, f"unknown dtype tag {tag} for tensor {name!r}")
        shape = reader.unpack(f"<{ndim}Q", f"{name} dims")
        dtype = TAG_DTYPES[tag]
        size = int(np.prod(shape)) if ndim else 1
        payload = reader.take(size * dtype.itemsize, f"{name} payload")
        array = np.frombuffer(payload, dtype=dtype).reshape(shape)
        tensors[name] = array.astype(dtype.newbyteorder("="), copy=True)

    if reader.offset != len(data):
        raise CheckpointError(path, f"declared length disagrees with file size: {len(data) - reader.offset} trailing bytes")
    return Checkpoint(tensors=tensors, metadata=metadata)


def write_checkpoint(path: Path | str, ckpt: Checkpoint) -> Path:
    """Encode and write atomically: `<path>.tmp` then rename over path."""
    path = Path(path)
    data = encode_checkpoint(ckpt, path)
    temp_path = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        temp_path.write_bytes(data)
        temp_path.replace(path)
    except OSError as e:
        raise CheckpointError(path, f"cannot write: {e}") from e
    logger.info(f"Saved checkpoint ({len(ckpt.tensors)} tensors, {len(data)} bytes): {path}")
    return path


def read_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(path, "checkpoint not found") from None
    except OSError as e:
        raise CheckpointError(path, f"cannot read: {e}") from e
    return decode_checkpoint(data, path)


def save_checkpoint(
    path: Path | str,
    model: VaeModel,
    optimizer: Optional[AdamState],
    metadata: Dict[str, str],
    cfg: ExperimentConfig,
    head: Optional[ClassifierHead] = None,
) -> Path:
    """Persist model parameters, Adam moments, an optional classifier head and metadata.

    The config snapshot is stored under "config" so load_checkpoint can
    rebuild the networks.
    """
    tensors = {f"model/{name}": value for name, value in model.state_dict().items()}
    meta = dict(metadata)
    meta["config"] = cfg.model_dump_json()
    if optimizer is not None:
        for name in optimizer.m:
            tensors[f"adam.m/{name}"] = optimizer.m[name]
            tensors[f"adam.v/{name}"] = optimizer.v[name]
        meta["adam"] = json.dumps(optimizer.metadata(), sort_keys=True)
    if head is not None:
        tensors.update({f"head/{p.name}": p.data for p in head.parameters()})
    return write_checkpoint(path, Checkpoint(tensors=tensors, metadata=meta))


def _group(tensors: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    return {name[len(prefix) :]: value for name, value in tensors.items() if name.startswith(prefix)}


def load_checkpoint(
    path: Path | str,
) -> Tuple[VaeModel, Optional[AdamState], Dict[str, str], ExperimentConfig, Optional[ClassifierHead]]:
    """Inverse of save_checkpoint.

    Returns:
        Tuple: (model, optimizer state or None, metadata, config, classifier head or None)

    Raises:
        CheckpointError: If the container is invalid or its tensors do not fit the stored config
    """
    path = Path(path)
    ckpt = read_checkpoint(path)
    if "config" not in ckpt.metadata:
        raise CheckpointError(path, "metadata has no config snapshot")
    try:
        cfg = ExperimentConfig.model_validate_json(ckpt.metadata["config"])
    except ValueError as e:
        raise CheckpointError(path, f"invalid config snapshot: {e}") from None

    model = build_model(cfg.latent, cfg.arch, cfg.pretrain.seed, np.dtype(cfg.dtype))
    try:
        model.load_state_dict(_group(ckpt.tensors, "model/"))
    except CheckpointError as e:
        raise CheckpointError(path, str(e).split(": ", 1)[-1]) from None

    optimizer = None
    if "adam" in ckpt.metadata:
        try:
            hyper = json.loads(ckpt.metadata["adam"])
            optimizer = AdamState(m=_group(ckpt.tensors, "adam.m/"), v=_group(ckpt.tensors, "adam.v/"), **hyper)
        except (ValueError, TypeError) as e:
            raise CheckpointError(path, f"invalid optimizer metadata: {e}") from None

    head = None
    head_arrays = _group(ckpt.tensors, "head/")
    if head_arrays:
        head = build_classifier(
            cfg.latent,
            dtype=np.dtype(cfg.dtype),
            num_classes=cfg.finetune.num_classes,
            hidden=cfg.finetune.hidden,
            hidden_threshold=cfg.finetune.hidden_threshold,
        )
        params = {p.name: p for p in head.parameters()}
        if set(params) != set(head_arrays):
            raise CheckpointError(path, f"classifier tensors {sorted(head_arrays)} do not match {sorted(params)}")
        for name, p in params.items():
            if head_arrays[name].shape != p.data.shape:
                raise CheckpointError(path, f"classifier tensor {name} has shape {head_arrays[name].shape}")
            p.data = head_arrays[name]

    logger.info(f"Loaded checkpoint {path} (epoch {ckpt.metadata.get('epoch', '?')})")
    return model, optimizer, ckpt.metadata, cfg, head
