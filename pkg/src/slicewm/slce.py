"""Reader/writer for ``.slce`` latent files.

Layout (all little-endian)::

    magic   4 bytes  b"SLCE"
    version u16      1
    h, w, d u32 x 3
    values  h*w*d float32, row-major over (i, j, channel)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from slicewm.core import LatentGrid

MAGIC = b"SLCE"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")
HEADER_SIZE = _HEADER.size


class SlceFormatError(ValueError):
    pass


def dumps(grid: LatentGrid) -> bytes:
    h, w, d = grid.shape
    header = _HEADER.pack(MAGIC, VERSION, h, w, d)
    return header + grid.values.astype("<f4").tobytes(order="C")


def read_header(data: bytes) -> tuple[int, int, int]:
    if len(data) < HEADER_SIZE:
        raise SlceFormatError("truncated header")
    magic, version, h, w, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SlceFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SlceFormatError(f"unsupported version {version}")
    return h, w, d


def loads(data: bytes) -> LatentGrid:
    h, w, d = read_header(data)
    n = h * w * d
    body = data[HEADER_SIZE:]
    if len(body) != 4 * n:
        raise SlceFormatError(f"payload has {len(body)} bytes, expected {4 * n}")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(h, w, d)
    try:
        return LatentGrid(values)
    except ValueError as exc:
        raise SlceFormatError(str(exc)) from None


def save(grid: LatentGrid, path: str | Path) -> None:
    Path(path).write_bytes(dumps(grid))


def load(path: str | Path) -> LatentGrid:
    return loads(Path(path).read_bytes())
