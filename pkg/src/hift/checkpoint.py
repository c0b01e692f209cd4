"""Flat binary checkpoint container.

Layout (all integers little-endian)::

    b"HIFT" | version u32 | count u32 |
    count x ( name_len u16 | utf-8 name | rank u8 | rank x u32 extents | float64 values )
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"HIFT"
VERSION = 1


def dumps(state: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, value in state.items():
        raw = name.encode("utf-8")
        value = np.asarray(value, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(np.ascontiguousarray(value).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != MAGIC:
        raise ValueError("not a HIFT checkpoint")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    state = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        shape = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        size = int(np.prod(shape)) if rank else 1
        state[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(buf):
        raise ValueError("trailing bytes in checkpoint")
    return state


def save(path, state):
    with open(path, "wb") as f:
        f.write(dumps(state))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
