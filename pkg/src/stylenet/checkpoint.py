"""
Binary checkpoint format (all integers little-endian):

    b"STYLENET" | version u32 | header length u32 | header (JSON, UTF-8)
    | tensor count u32 | records | CRC32 u32 of everything before it

Each record is: name length u32, name bytes, rank u32, dims u64 * rank,
then the values as float64. Tensor names are prefixed "param/", "adam.m/"
or "adam.v/" and written in sorted order.
"""

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from ..neural.optim import AdamState
from ..neural.tensor import NamedTensors

MAGIC = b"STYLENET"
VERSION = 1

U32 = struct.Struct('<I')
U64 = struct.Struct('<Q')


class CheckpointError(ValueError):
    pass


@dataclass
class LossRecord:
    epoch: int
    genre: str
    train_loss: float
    val_loss: Optional[float] = None


@dataclass
class Checkpoint:
    config: Dict[str, Any]
    genres: List[str]
    params: NamedTensors
    adam: AdamState
    epoch: int = 0
    rng_state: Dict[str, Any] = field(default_factory=dict)
    losses: List[LossRecord] = field(default_factory=list)
    version: int = VERSION


def _header(ckpt: Checkpoint) -> bytes:
    header = {
        'config': ckpt.config,
        'genres': ckpt.genres,
        'epoch': ckpt.epoch,
        'rng_state': ckpt.rng_state,
        'adam': {'t': ckpt.adam.t, 'beta1': ckpt.adam.beta1, 'beta2': ckpt.adam.beta2, 'eps': ckpt.adam.eps},
        'losses': [[r.epoch, r.genre, r.train_loss, r.val_loss] for r in ckpt.losses],
    }
    return json.dumps(header, sort_keys=True, allow_nan=False).encode('utf-8')


def _record(name: str, values: np.ndarray) -> bytes:
    encoded = name.encode('utf-8')
    out = bytearray(U32.pack(len(encoded)) + encoded + U32.pack(values.ndim))
    for dim in values.shape:
        out += U64.pack(dim)
    out += np.ascontiguousarray(values, dtype='<f8').tobytes()
    return bytes(out)


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    tensors = {f"param/{k}": v for k, v in ckpt.params.items()}
    tensors.update({f"adam.m/{k}": v for k, v in ckpt.adam.m.items()})
    tensors.update({f"adam.v/{k}": v for k, v in ckpt.adam.v.items()})

    header = _header(ckpt)
    out = bytearray(MAGIC + U32.pack(ckpt.version) + U32.pack(len(header)) + header)
    out += U32.pack(len(tensors))
    for name in sorted(tensors):
        out += _record(name, tensors[name])
    out += U32.pack(zlib.crc32(out))
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        chunk = self.data[self.pos:self.pos + size]
        if len(chunk) != size:
            raise CheckpointError("truncated checkpoint")
        self.pos += size
        return chunk

    def u32(self) -> int:
        return U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return U64.unpack(self.take(8))[0]


def loads_checkpoint(data: bytes) -> Checkpoint:
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a StyleNet checkpoint (bad magic)")
    if len(data) < len(MAGIC) + 12:
        raise CheckpointError("truncated checkpoint")
    body, crc = data[:-4], U32.unpack(data[-4:])[0]

    reader = _Reader(body)
    reader.take(len(MAGIC))
    version = reader.u32()
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {VERSION})")
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint is corrupt (CRC mismatch)")

    try:
        header = json.loads(reader.take(reader.u32()).decode('utf-8'))
    except ValueError as e:
        raise CheckpointError(f"unreadable checkpoint header: {e}") from e

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode('utf-8')
        shape = tuple(reader.u64() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(reader.take(8 * count), dtype='<f8').astype(np.float64).reshape(shape)
    if reader.pos != len(body):
        raise CheckpointError("trailing bytes in checkpoint")

    def section(prefix: str) -> NamedTensors:
        return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}

    adam = header['adam']
    return Checkpoint(
        config=header['config'],
        genres=header['genres'],
        params=section("param/"),
        adam=AdamState(section("adam.m/"), section("adam.v/"), {k: int(v) for k, v in adam['t'].items()},
                       adam['beta1'], adam['beta2'], adam['eps']),
        epoch=header['epoch'],
        rng_state=header['rng_state'],
        losses=[LossRecord(*row) for row in header['losses']],
        version=version,
    )


def save_checkpoint(ckpt: Checkpoint, path):
    """Writes atomically: a crash mid-write leaves the previous checkpoint in place."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, 'wb') as f:
        f.write(dumps_checkpoint(ckpt))
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, 'rb') as f:
        return loads_checkpoint(f.read())


def write_loss_csv(losses: List[LossRecord], path):
    with open(path, 'w', newline='') as f:
        f.write("epoch,genre,train_loss,val_loss\n")
        for r in losses:
            val = "" if r.val_loss is None else repr(r.val_loss)
            f.write(f"{r.epoch},{r.genre},{r.train_loss!r},{val}\n")


def read_loss_csv(path) -> List[LossRecord]:
    records = []
    with open(path, 'r') as f:
        next(f)
        for line in f:
            epoch, genre, train, val = line.rstrip("\n").split(",")
            records.append(LossRecord(int(epoch), genre, float(train), float(val) if val else None))
    return records

