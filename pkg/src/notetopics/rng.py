"""Portable seeded random numbers for the sampler.

xoshiro256** seeded through SplitMix64. Both are defined on exact 64-bit
integer arithmetic, so a seed yields the same stream on every platform.
Uniform doubles take the top 53 bits: ``(x >> 11) * 2**-53``.

The jitted functions operate on a length-4 ``uint64`` state array in place.
The pure-Python twins exist to pin the stream in tests.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np
from numba import njit

_MASK = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U5 = np.uint64(5)
_U9 = np.uint64(9)
_U11 = np.uint64(11)
_U17 = np.uint64(17)
_U27 = np.uint64(27)
_U30 = np.uint64(30)
_U31 = np.uint64(31)
_U45 = np.uint64(45)
_U7 = np.uint64(7)
_U64 = np.uint64(64)
_INV53 = 1.0 / 9007199254740992.0


def splitmix64_py(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def seed_state(seed: int) -> np.ndarray:
    if not 0 <= seed <= _MASK:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    out = []
    s = seed
    for _ in range(4):
        s, z = splitmix64_py(s)
        out.append(z)
    return np.array(out, dtype=np.uint64)


def _rotl_py(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def xoshiro_next_py(s: list[int]) -> int:
    result = (_rotl_py((s[1] * 5) & _MASK, 7) * 9) & _MASK
    t = (s[1] << 17) & _MASK
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl_py(s[3], 45)
    return result


@njit(cache=True, nogil=True)
def _rotl(x, k):
    return (x << k) | (x >> (_U64 - k))


@njit(cache=True, nogil=True)
def next_u64(s):
    s0 = s[0]
    s1 = s[1]
    s2 = s[2]
    s3 = s[3]
    result = _rotl(s1 * _U5, _U7) * _U9
    t = s1 << _U17
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, _U45)
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return result


@njit(cache=True, nogil=True)
def next_double(s):
    return np.float64(next_u64(s) >> _U11) * _INV53


def derive_seed(base_seed: int, k: int) -> int:
    """Independent per-K seed: first 8 bytes (little-endian) of BLAKE2b over both values."""
    digest = hashlib.blake2b(struct.pack("<QQ", base_seed & _MASK, k), digest_size=8).digest()
    return struct.unpack("<Q", digest)[0]
