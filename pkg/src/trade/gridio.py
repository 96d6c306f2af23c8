"""Binary grid files shared by depth maps, score maps and debug masks.

Layout: 16-byte header ``magic (8 bytes) | width (u32 LE) | height (u32 LE)``
followed by the row-major little-endian payload. The magic selects the cell
type: ``TRADEF32`` for float32 grids, ``TRADEU08`` for 8-bit grayscale.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC_F32 = b"TRADEF32"
MAGIC_U8 = b"TRADEU08"
_HEADER = struct.Struct("<8sII")


def encode_grid(grid) -> bytes:
    a = np.asarray(grid)
    if a.ndim != 2:
        raise ValueError("grid must be 2D")
    h, w = a.shape
    if a.dtype == np.bool_ or a.dtype == np.uint8:
        payload = (a.astype(np.uint8) * (255 if a.dtype == np.bool_ else 1)).astype("<u1")
        magic = MAGIC_U8
    else:
        payload = a.astype("<f4")
        magic = MAGIC_F32
    return _HEADER.pack(magic, w, h) + payload.tobytes(order="C")


def decode_grid(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValueError("truncated grid header")
    magic, w, h = _HEADER.unpack_from(data)
    if magic == MAGIC_F32:
        dtype = np.dtype("<f4")
    elif magic == MAGIC_U8:
        dtype = np.dtype("<u1")
    else:
        raise ValueError(f"unknown grid magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != w * h * dtype.itemsize:
        raise ValueError("grid payload size does not match header")
    return np.frombuffer(body, dtype=dtype).reshape(h, w).copy()


def write_grid(path, grid) -> None:
    Path(path).write_bytes(encode_grid(grid))


def read_grid(path) -> np.ndarray:
    return decode_grid(Path(path).read_bytes())
