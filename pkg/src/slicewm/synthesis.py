"""Keyed synthesis of Gaussian latent values from semantic descriptors.

Each latent entry is drawn from a keyed PRF (BLAKE2b in keyed mode) over the
domain-separated tuple ``(tag, digest, i, j, c, t)``; the two 64-bit blocks
(t = 0, 1) become uniforms in (0, 1] and are combined by Box-Muller.

The text encoder is a SHA-256 digest of the normalized descriptor. A real
embedding model can replace :func:`digest_descriptor` as long as it returns a
stable 32-byte identifier.
"""

from __future__ import annotations

import hashlib
import re
import struct
import unicodedata

import numpy as np

from slicewm.core import FACTORS, DescriptorSet, LatentGrid, PartitionLayout, Position, SecretKey

TAG = b"SLICE.v1"
DIGEST_SIZE = 32
_INDEX = struct.Struct("<IIBB")
_WS = re.compile(r"\s+")
_TWO_NEG_53 = 2.0**-53


class DescriptorError(ValueError):
    pass


def normalize_descriptor(text: str) -> str:
    """NFC-normalize, trim, and collapse internal whitespace runs. Case is preserved."""
    out = _WS.sub(" ", unicodedata.normalize("NFC", text)).strip()
    if not out:
        raise DescriptorError("empty descriptor")
    return out


def digest_descriptor(text: str) -> bytes:
    return hashlib.sha256(text.encode("utf-8")).digest()


def _prf_base(digest: bytes, key: SecretKey) -> "hashlib._Hash":
    if len(digest) != DIGEST_SIZE:
        raise ValueError("semantic digest must be 32 bytes")
    base = hashlib.blake2b(key=key.material, digest_size=8)
    base.update(TAG)
    base.update(digest)
    return base


def _blocks(base, i: int, j: int, c: int) -> tuple[int, int]:
    out = []
    for t in (0, 1):
        h = base.copy()
        h.update(_INDEX.pack(i, j, c, t))
        out.append(int.from_bytes(h.digest(), "little"))
    return out[0], out[1]


def _box_muller(b0: np.ndarray, b1: np.ndarray) -> np.ndarray:
    u0 = ((b0 >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _TWO_NEG_53
    u1 = ((b1 >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _TWO_NEG_53
    return np.sqrt(-2.0 * np.log(u0)) * np.cos(2.0 * np.pi * u1)


def sample_gaussian_prf(digest: bytes, p: Position | tuple[int, int], c: int, key: SecretKey) -> float:
    b0, b1 = _blocks(_prf_base(digest, key), p[0], p[1], c)
    z = _box_muller(np.array([b0], dtype=np.uint64), np.array([b1], dtype=np.uint64))
    return float(z[0])


_INDEX_DTYPE = np.dtype([("i", "<u4"), ("j", "<u4"), ("c", "u1"), ("t", "u1")])


def synthesize_region(digest: bytes, positions: np.ndarray, d: int, key: SecretKey) -> np.ndarray:
    """Values for an (n, 2) array of positions; returns shape (n, d)."""
    positions = np.asarray(positions).reshape(-1, 2)
    n = len(positions)
    rec = np.zeros((n, d, 2), dtype=_INDEX_DTYPE)
    rec["i"] = positions[:, 0, None, None]
    rec["j"] = positions[:, 1, None, None]
    rec["c"] = np.arange(d)[None, :, None]
    rec["t"] = np.arange(2)[None, None, :]
    raw = memoryview(rec.tobytes())
    step = _INDEX_DTYPE.itemsize
    copy = _prf_base(digest, key).copy
    out = []
    for off in range(0, len(raw), step):
        h = copy()
        h.update(raw[off : off + step])
        out.append(h.digest())
    blocks = np.frombuffer(b"".join(out), dtype="<u8").astype(np.uint64).reshape(n, d, 2)
    return _box_muller(blocks[..., 0], blocks[..., 1])


def synthesize_latent(
    descriptors: DescriptorSet, layout: PartitionLayout, d: int, key: SecretKey
) -> LatentGrid:
    """Latent whose entries in each region depend only on that region's descriptor, the position and the key."""
    if d < 1 or d > 256:
        raise ValueError("channel depth must be in [1, 256]")
    values = np.empty((layout.h, layout.w, d), dtype=np.float64)
    for k in FACTORS:
        mask = layout.mask(k)
        positions = np.argwhere(mask)
        digest = digest_descriptor(descriptors[k])
        values[mask] = synthesize_region(digest, positions, d, key)
    return LatentGrid(values)
