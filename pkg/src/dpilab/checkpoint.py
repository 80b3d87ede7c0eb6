"""Binary checkpoint container with named float64 tensors and a trailing CRC.

Little-endian layout:

    magic "DPI1" | u32 format version | u32 config length | config utf-8
    u32 tensor count | tensors...            (model parameters)
    u32 tensor count | tensors...            (optimizer moments m.*/v.*)
    u32 tensor count | tensors...            (EMA shadow)
    u64 iteration | u32 rng length | rng json utf-8 | u32 crc32

Each tensor is: u16 name length | name utf-8 | u8 rank | u64 dims... |
float64 payload in row-major order. The CRC covers everything before it.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

MAGIC = b"DPI1"
FORMAT_VERSION = 1

Array = np.ndarray


@dataclass
class Checkpoint:
    config_text: str
    tensors: dict[str, Array]
    opt_tensors: dict[str, Array] = field(default_factory=dict)
    ema_tensors: dict[str, Array] = field(default_factory=dict)
    iteration: int = 0
    rng_state: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _pack_tensor(name: str, arr: Array) -> bytes:
    nb = name.encode("utf-8")
    if len(nb) > 0xFFFF:
        raise FormatError(f"tensor name too long: {name!r}")
    arr = np.asarray(arr, dtype=np.float64)
    parts = [struct.pack("<H", len(nb)), nb, struct.pack("<B", arr.ndim)]
    parts += [struct.pack("<Q", d) for d in arr.shape]
    parts.append(np.ascontiguousarray(arr).astype("<f8").tobytes())
    return b"".join(parts)


def _pack_section(tensors: dict[str, Array]) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    parts += [_pack_tensor(name, arr) for name, arr in tensors.items()]
    return b"".join(parts)


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    cfg = ckpt.config_text.encode("utf-8")
    rng = json.dumps(ckpt.rng_state, sort_keys=True).encode("utf-8")
    body = b"".join([
        MAGIC,
        struct.pack("<I", ckpt.version),
        struct.pack("<I", len(cfg)), cfg,
        _pack_section(ckpt.tensors),
        _pack_section(ckpt.opt_tensors),
        _pack_section(ckpt.ema_tensors),
        struct.pack("<Q", ckpt.iteration),
        struct.pack("<I", len(rng)), rng,
    ])
    return body + struct.pack("<I", zlib.crc32(body))


def checkpoint_save(ckpt: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_to_bytes(ckpt))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise FormatError(f"checkpoint truncated at offset {self.off} "
                              f"(wanted {n} bytes, {len(self.buf) - self.off} left)")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def _read_tensor(r: _Reader) -> tuple[str, Array]:
    name = r.take(r.u16()).decode("utf-8")
    rank = r.u8()
    shape = tuple(r.u64() for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    payload = r.take(8 * count)
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    return name, arr


def _read_section(r: _Reader) -> dict[str, Array]:
    return dict(_read_tensor(r) for _ in range(r.u32()))


def checkpoint_load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4:
        raise FormatError("checkpoint truncated: no CRC trailer")
    stored_crc = struct.unpack("<I", buf[-4:])[0]
    actual_crc = zlib.crc32(buf[:-4])
    if stored_crc != actual_crc:
        raise FormatError(f"checkpoint CRC mismatch at offset {len(buf) - 4}: "
                          f"stored {stored_crc:#010x}, computed {actual_crc:#010x}")
    r = _Reader(buf[:-4])
    if r.take(4) != MAGIC:
        raise FormatError("checkpoint magic mismatch at offset 0")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format version {version}")
    config_text = r.take(r.u32()).decode("utf-8")
    tensors = _read_section(r)
    opt_tensors = _read_section(r)
    ema_tensors = _read_section(r)
    iteration = r.u64()
    rng_state = json.loads(r.take(r.u32()).decode("utf-8"))
    if r.off != len(r.buf):
        raise FormatError(f"trailing bytes after checkpoint payload at offset {r.off}")
    return Checkpoint(config_text=config_text, tensors=tensors, opt_tensors=opt_tensors,
                      ema_tensors=ema_tensors, iteration=iteration, rng_state=rng_state,
                      version=version)
