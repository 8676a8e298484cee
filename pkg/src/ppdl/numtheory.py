"""Integer routines behind Paillier key generation and encryption.

Python ints are arbitrary precision, so they serve directly as the
unsigned big-integer type.  Modular exponentiation is delegated to gmpy2
(GMP) because per-pixel encryption is dominated by it.  Nothing here is
constant time.
"""

from __future__ import annotations

import math

import gmpy2

from .errors import BadModulus, NotInvertible, ZeroOperand
from .rng import randbelow

DEFAULT_MR_ROUNDS = 40

_SMALL_PRIMES = [
    p for p in range(3, 1000) if all(p % d for d in range(2, int(p**0.5) + 1))
]


def gcd(a: int, b: int) -> int:
    return math.gcd(a, b)


def lcm(a: int, b: int) -> int:
    if a <= 0 or b <= 0:
        raise ZeroOperand(f"lcm needs positive operands, got ({a}, {b})")
    return a // gcd(a, b) * b


def mod_exp(base: int, exp: int, modulus: int) -> int:
    """``base ** exp % modulus`` for non-negative ``exp``."""
    if modulus < 2:
        raise BadModulus(f"modulus must be >= 2, got {modulus}")
    if exp < 0:
        raise ValueError("exponent must be non-negative")
    return int(gmpy2.powmod(base, exp, modulus))


def mod_inv(a: int, modulus: int) -> int:
    """Inverse of ``a`` modulo ``modulus`` by the extended Euclidean algorithm."""
    if modulus < 2:
        raise BadModulus(f"modulus must be >= 2, got {modulus}")
    old_r, r = a % modulus, modulus
    old_s, s = 1, 0
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
    if old_r != 1:
        raise NotInvertible(f"{a} has no inverse modulo {modulus} (gcd={old_r})")
    return old_s % modulus


def is_probable_prime(n: int, rounds: int = DEFAULT_MR_ROUNDS, rng=None) -> bool:
    """Miller-Rabin test.

    ``False`` is always correct.  ``True`` is wrong with probability at most
    ``4 ** -rounds``.  Witnesses are drawn from ``rng`` (anything with
    ``getrandbits``), so the answer is reproducible for a fixed seed.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    if rng is None:
        from .rng import SplitMix64

        rng = SplitMix64.derive("miller-rabin", n)

    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = 2 + randbelow(rng, n - 3)
        x = mod_exp(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng, rounds: int = DEFAULT_MR_ROUNDS) -> int:
    """Probable prime with exactly ``bits`` bits, drawn from ``rng``."""
    if bits < 8:
        raise ValueError("bits must be >= 8")
    top = 1 << (bits - 1)
    while True:
        cand = rng.getrandbits(bits) | top | 1
        if is_probable_prime(cand, rounds, rng):
            return cand
