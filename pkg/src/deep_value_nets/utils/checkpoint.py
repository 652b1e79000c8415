"""Binary checkpoints of network parameters.

Layout, little-endian::

    b"DVNC"                          magic
    u32                              version (major << 16 | minor)
    u32 + bytes                      config echo, UTF-8 JSON
    u64, i64                         step counter, seed
    u32                              tensor count
    per tensor:
      u16 + bytes                    name, UTF-8
      u32                            rank
      u64 * rank                     dims
      f64 * prod(dims)               values, row-major
    u32                              CRC32 of everything above
"""

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from deep_value_nets.core.value_net import NetworkParams
from deep_value_nets.utils.formats import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"DVNC"
VERSION = (1, 0)


class CheckpointError(ValueError):
    """Unreadable or corrupt checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an incompatible format version."""


@dataclass
class Checkpoint:
    params: NetworkParams
    config: Dict[str, Any] = field(default_factory=dict)
    step: int = 0
    seed: int = 0
    version: Tuple[int, int] = VERSION


def _pack_version(version: Tuple[int, int]) -> int:
    return (version[0] << 16) | version[1]


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    config = json.dumps(checkpoint.config, sort_keys=True).encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<I", _pack_version(checkpoint.version)),
        struct.pack("<I", len(config)),
        config,
        struct.pack("<Qq", checkpoint.step, checkpoint.seed),
        struct.pack("<I", len(checkpoint.params)),
    ]
    for name, value in checkpoint.params.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<I{value.ndim}Q", value.ndim, *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError("corrupt checkpoint: unexpected end of data")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (packed,) = struct.unpack("<I", data[4:8])
    version = (packed >> 16, packed & 0xFFFF)
    if version[0] != VERSION[0]:
        raise CheckpointVersionError(
            f"checkpoint format version {version[0]}.{version[1]} is not supported "
            f"(this build reads {VERSION[0]}.x)"
        )
    body, (stored_crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != stored_crc:
        raise CheckpointError("corrupt checkpoint: checksum mismatch")

    reader = _Reader(body)
    reader.take(8)
    (config_len,) = reader.unpack("<I")
    try:
        config = json.loads(reader.take(config_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: bad config echo ({e})") from None
    step, seed = reader.unpack("<Qq")
    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<I")
        dims = reader.unpack(f"<{rank}Q")
        size = int(np.prod(dims, dtype=np.int64))
        raw = reader.take(8 * size)
        tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
    if reader.offset != len(body):
        raise CheckpointError("corrupt checkpoint: trailing data")
    return Checkpoint(NetworkParams(tensors), config, step, seed, version)


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> None:
    atomic_write_bytes(path, encode_checkpoint(checkpoint))
    logger.info(
        f"Saved checkpoint to {path} ({checkpoint.params.count()} parameters, step {checkpoint.step})"
    )


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    checkpoint = decode_checkpoint(path.read_bytes())
    logger.info(f"Loaded checkpoint from {path} (step {checkpoint.step})")
    return checkpoint
