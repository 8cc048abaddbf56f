"""Hash pipeline shared by every sketch builder.

Raw join keys are mapped to 32-bit integers with MurmurHash3 (x86, 32-bit,
seed 0) and then to the unit interval with Fibonacci hashing. Two tables
that hash the same key obtain the same values, which is what coordinates
the min-hash selections across sketches.
"""

from __future__ import annotations

import struct
from functools import lru_cache

import numpy as np

#: Identifier written into serialized sketches. Bump when any constant changes.
HASH_CONTRACT = "murmur3_x86_32/seed0+fib32"

MURMUR_SEED = 0
FIBONACCI_MULTIPLIER = 2654435769  # round(2**32 / golden ratio)
DERIVED_KEY_SEPARATOR = b"\x1f"

_MASK32 = 0xFFFFFFFF
_C1 = 0xCC9E2D51
_C2 = 0x1B873593


def murmur3_32(data: bytes, seed: int = MURMUR_SEED) -> int:
    """MurmurHash3 x86_32 digest of ``data`` as an unsigned 32-bit integer."""
    length = len(data)
    h = seed & _MASK32
    nblocks = length // 4

    for (k,) in struct.iter_unpack("<I", data[: nblocks * 4]):
        k = (k * _C1) & _MASK32
        k = ((k << 15) | (k >> 17)) & _MASK32
        k = (k * _C2) & _MASK32
        h ^= k
        h = ((h << 13) | (h >> 19)) & _MASK32
        h = (h * 5 + 0xE6546B64) & _MASK32

    tail = data[nblocks * 4 :]
    k = 0
    if len(tail) == 3:
        k ^= tail[2] << 16
    if len(tail) >= 2:
        k ^= tail[1] << 8
    if len(tail) >= 1:
        k ^= tail[0]
        k = (k * _C1) & _MASK32
        k = ((k << 15) | (k >> 17)) & _MASK32
        k = (k * _C2) & _MASK32
        h ^= k

    h ^= length
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & _MASK32
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & _MASK32
    h ^= h >> 16
    return h


def _as_bytes(key: str | bytes) -> bytes:
    return key.encode("utf-8") if isinstance(key, str) else bytes(key)


@lru_cache(maxsize=1 << 18)
def _hash_key_cached(key: bytes) -> int:
    return murmur3_32(key)


@lru_cache(maxsize=1 << 18)
def _hash_derived_cached(key: bytes, occurrence: int) -> int:
    return murmur3_32(key + DERIVED_KEY_SEPARATOR + struct.pack("<I", occurrence))


def hash_key(key: str | bytes) -> int:
    """32-bit hash of a join key. Text keys are encoded as UTF-8."""
    return _hash_key_cached(_as_bytes(key))


def hash_derived_key(key: str | bytes, occurrence: int) -> int:
    """Hash of the occurrence-indexed key ``<key, occurrence>``.

    The derived key is ``key || 0x1F || occurrence`` with the 1-based
    occurrence index packed as 4 little-endian bytes.
    """
    if occurrence < 1:
        raise ValueError(f"occurrence index must be >= 1, got {occurrence}")
    return _hash_derived_cached(_as_bytes(key), occurrence)


def unit_hash(h: int) -> float:
    """Fibonacci hash of a 32-bit integer onto [0, 1)."""
    return ((h * FIBONACCI_MULTIPLIER) & _MASK32) / 4294967296.0


def unit_hash_array(hashes: np.ndarray) -> np.ndarray:
    """Vectorized :func:`unit_hash` over an array of 32-bit hashes."""
    h = np.asarray(hashes, dtype=np.uint64)
    return ((h * np.uint64(FIBONACCI_MULTIPLIER)) & np.uint64(_MASK32)).astype(np.float64) / 4294967296.0
