"""SplitMix64: the seeded random source used throughout the package.

The generator keeps a single 64-bit state word.  Each call to ``next_u64``
adds the golden-ratio increment ``0x9E3779B97F4A7C15`` to the state and
returns the state passed through the SplitMix64 finaliser (xor-shift 30,
multiply, xor-shift 27, multiply, xor-shift 31).  Everything else here is
built from that stream with fixed, documented rules so that manifests and
keys can be reproduced outside Python:

* ``getrandbits(k)`` concatenates ``ceil(k/64)`` words, first word most
  significant, and drops the surplus low bits.
* ``randbelow(n)`` rejection-samples ``getrandbits(n.bit_length())``.
* ``shuffle`` is Fisher-Yates from the last index down, swapping ``i``
  with ``randbelow(i + 1)``.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = seed & MASK64

    @classmethod
    def derive(cls, *parts) -> "SplitMix64":
        """Generator seeded from a SHA-256 digest of ``parts`` (for substreams)."""
        h = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
        return cls(int.from_bytes(h[:8], "little"))

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def getrandbits(self, k: int) -> int:
        if k < 0:
            raise ValueError("number of bits must be non-negative")
        if k == 0:
            return 0
        words = (k + 63) // 64
        acc = 0
        for _ in range(words):
            acc = (acc << 64) | self.next_u64()
        return acc >> (words * 64 - k)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("upper bound must be positive")
        k = n.bit_length()
        while True:
            v = self.getrandbits(k)
            if v < n:
                return v

    def randrange(self, start: int, stop: int) -> int:
        return start + self.randbelow(stop - start)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def randbelow(rng, n: int) -> int:
    """Uniform draw in ``[0, n)`` from any object exposing ``getrandbits``."""
    if n <= 0:
        raise ValueError("upper bound must be positive")
    k = n.bit_length()
    while True:
        v = rng.getrandbits(k)
        if v < n:
            return v
