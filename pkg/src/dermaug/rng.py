"""Counter-based random streams keyed by (master seed, sample id, op name).

Generator ``splitmix64-ctr/v1``:

* stream key = first 8 bytes (little endian) of BLAKE2b-64 over
  ``b"dermaug-seed/v1\\0" || u64le(master_seed) || u32le(len(id)) || id
  || u32le(len(op)) || op`` with both strings UTF-8 encoded;
* draw ``i`` (0-based) = ``splitmix64_mix(key + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)``;
* ``uniform()`` = ``(draw >> 11) * 2**-53`` in [0, 1);
* ``normal()`` = Box-Muller cosine branch on two consecutive uniforms,
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``;
* ``integers(lo, hi)`` = rejection sampling on the 64-bit draw, inclusive bounds.

Because draw ``i`` depends only on (key, i), streams are independent of call
order across samples and can be reproduced in any language with 64-bit ints.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import MutableSequence, TypeVar

GENERATOR_NAME = "splitmix64-ctr/v1"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_DOMAIN = b"dermaug-seed/v1\0"

T = TypeVar("T")


def mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, sample_id: str, op: str) -> int:
    if not 0 <= master_seed <= _MASK64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master_seed}")
    sid = sample_id.encode("utf-8")
    opb = op.encode("utf-8")
    payload = (
        _DOMAIN
        + struct.pack("<Q", master_seed)
        + struct.pack("<I", len(sid)) + sid
        + struct.pack("<I", len(opb)) + opb
    )
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RandomStream:
    """Sequential reader over one counter-based stream."""

    def __init__(self, key: int):
        self.key = key & _MASK64
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.key + self.counter * _GOLDEN)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
        return lo + (hi - lo) * u

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        z = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
        return mean + std * z

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        if hi < lo:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        n = hi - lo + 1
        if n > _MASK64:
            raise ValueError("integer range wider than 64 bits")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return lo + x % n

    def shuffle(self, items: MutableSequence[T]) -> MutableSequence[T]:
        """In-place Fisher-Yates shuffle; returns ``items`` for chaining."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(0, i)
            items[i], items[j] = items[j], items[i]
        return items


@dataclass(frozen=True)
class SeedContext:
    master_seed: int
    sample_id: str

    def __post_init__(self):
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed <= _MASK64:
            raise ValueError(f"master seed must be an unsigned 64-bit integer, got {self.master_seed!r}")

    def key(self, op: str) -> int:
        return stream_key(self.master_seed, self.sample_id, op)

    def stream(self, op: str) -> RandomStream:
        return RandomStream(self.key(op))

    def child(self, suffix: str) -> "SeedContext":
        return SeedContext(self.master_seed, f"{self.sample_id}/{suffix}")
