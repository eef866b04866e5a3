"""Named-parameter binary checkpoints.

Layout (little-endian)::

    magic "TTCK" | u16 version | u32 meta length | meta (UTF-8 JSON)
    u32 entry count
    per entry: u16 name length | name | u8 rank | u32 dims[rank] | f32 payload
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ParseError

MAGIC = b"TTCK"
VERSION = 1


def save_checkpoint(path, arrays, meta=None):
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Returns ``(arrays, meta)``."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack_from("<HI", buf, 4)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    meta = json.loads(buf[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    arrays = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(shape)
            pos += 4 * n
            arrays[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise ParseError(f"{path}: truncated checkpoint ({exc})") from None
    return arrays, meta
