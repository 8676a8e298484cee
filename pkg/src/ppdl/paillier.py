"""Paillier cryptosystem: key generation, encryption, decryption and the
additive homomorphic operations.

Plaintexts are plain ints in ``[0, n)``.  Ciphertexts carry the fingerprint
of the public key that produced them so that mixing keys fails loudly.

Key file grammar (UTF-8, ``\\n`` line endings, every value lowercase hex
with no ``0x`` prefix and no leading zeros)::

    version 1
    kind public|private
    n <hex>
    g <hex>
    lambda <hex>    # private only
    mu <hex>        # private only
    p <hex>         # private only
    q <hex>         # private only

Fields appear exactly in this order; anything else is rejected.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .errors import (
    CorruptCiphertext,
    InvalidGenerator,
    InvalidPrimes,
    InvalidRandomizer,
    KeyMismatch,
    KeyParseError,
    NotInvertible,
    PlaintextTooLarge,
)
from .numtheory import gcd, is_probable_prime, lcm, mod_exp, mod_inv, random_prime
from .rng import randbelow

KEY_FILE_VERSION = 1
DEFAULT_TEST_BITS = 512
DEFAULT_CLI_BITS = 1024
MIN_PRIME_BITS = 16


def key_fingerprint(n: int, g: int) -> str:
    """16 hex digits (64 bits) of SHA-256 over the canonical ``(n, g)`` text."""
    canon = f"n {n:x}\ng {g:x}\n".encode()
    return hashlib.sha256(canon).hexdigest()[:16]


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int
    n_squared: int = field(init=False, repr=False)
    fingerprint: str = field(init=False)

    def __post_init__(self):
        if self.n < 2:
            raise InvalidPrimes(f"modulus n must be >= 2, got {self.n}")
        n2 = self.n * self.n
        if not 0 < self.g < n2:
            raise InvalidGenerator("generator must satisfy 0 < g < n^2")
        object.__setattr__(self, "n_squared", n2)
        object.__setattr__(self, "fingerprint", key_fingerprint(self.n, self.g))

    def g_pow(self, m: int) -> int:
        """``g ** m mod n^2``; closed form ``1 + m*n`` when ``g = n + 1``."""
        if self.g == self.n + 1:
            return (1 + m * self.n) % self.n_squared
        return mod_exp(self.g, m, self.n_squared)


@dataclass(frozen=True)
class PrivateKey:
    lam: int
    mu: int
    p: int
    q: int
    fingerprint: str


@dataclass(frozen=True)
class Ciphertext:
    value: int
    key_fingerprint: str


def _L(x: int, n: int) -> int:
    return (x - 1) // n


def from_primes(p: int, q: int, g: int | None = None) -> tuple[PublicKey, PrivateKey]:
    """Build a key pair from explicit primes and generator (``g`` defaults to n+1)."""
    if p == q:
        raise InvalidPrimes("p and q must be distinct")
    if not (is_probable_prime(p) and is_probable_prime(q)):
        raise InvalidPrimes(f"p={p} and q={q} must both be prime")
    n = p * q
    if gcd(n, (p - 1) * (q - 1)) != 1:
        raise InvalidPrimes("gcd(pq, (p-1)(q-1)) != 1")
    if g is None:
        g = n + 1
    n2 = n * n
    if not 0 < g < n2:
        raise InvalidGenerator("generator must satisfy 0 < g < n^2")
    lam = lcm(p - 1, q - 1)
    x = mod_exp(g, lam, n2)
    if (x - 1) % n:
        raise InvalidGenerator(f"g^lambda mod n^2 = {x} is not 1 mod n")
    try:
        mu = mod_inv(_L(x, n), n)
    except NotInvertible as e:
        raise InvalidGenerator(f"L(g^lambda mod n^2) is not invertible mod n: {e}") from e
    pk = PublicKey(n, g)
    return pk, PrivateKey(lam, mu, p, q, pk.fingerprint)


def keygen(bits: int, rng, random_g: bool = False) -> tuple[PublicKey, PrivateKey]:
    """Generate a key pair with two ``bits``-bit primes drawn from ``rng``.

    By default ``g = n + 1``.  With ``random_g`` a generator is drawn uniformly
    from ``[1, n^2)`` until ``L(g^lambda mod n^2)`` is invertible.
    """
    if bits < MIN_PRIME_BITS:
        raise ValueError(f"bits per prime must be >= {MIN_PRIME_BITS}, got {bits}")
    while True:
        p = random_prime(bits, rng)
        q = random_prime(bits, rng)
        if p == q or gcd(p * q, (p - 1) * (q - 1)) != 1:
            continue
        if not random_g:
            return from_primes(p, q)
        n = p * q
        for _ in range(64):
            g = 1 + randbelow(rng, n * n - 1)
            try:
                return from_primes(p, q, g)
            except InvalidGenerator:
                continue


def _check_plaintext(pk: PublicKey, m: int) -> None:
    if m < 0 or m >= pk.n:
        raise PlaintextTooLarge(f"plaintext must lie in [0, n), got {m}")


def _check_owner(pk: PublicKey, *cs: Ciphertext) -> None:
    for c in cs:
        if c.key_fingerprint != pk.fingerprint:
            raise KeyMismatch(
                f"ciphertext belongs to key {c.key_fingerprint}, not {pk.fingerprint}"
            )


def encrypt(pk: PublicKey, m: int, r: int) -> Ciphertext:
    """``c = g^m * r^n mod n^2`` with caller-supplied randomizer ``r``."""
    _check_plaintext(pk, m)
    if not 0 < r < pk.n or gcd(r, pk.n) != 1:
        raise InvalidRandomizer(f"randomizer must satisfy 0 < r < n and gcd(r, n) = 1")
    c = pk.g_pow(m) * mod_exp(r, pk.n, pk.n_squared) % pk.n_squared
    return Ciphertext(c, pk.fingerprint)


def draw_randomizer(pk: PublicKey, rng) -> int:
    """Uniform ``r`` in ``[1, n)`` with ``gcd(r, n) = 1``."""
    while True:
        r = 1 + randbelow(rng, pk.n - 1)
        if gcd(r, pk.n) == 1:
            return r


def encrypt_random(pk: PublicKey, m: int, rng) -> Ciphertext:
    _check_plaintext(pk, m)
    return encrypt(pk, m, draw_randomizer(pk, rng))


def decrypt(sk: PrivateKey, pk: PublicKey, c: Ciphertext) -> int:
    """``m = L(c^lambda mod n^2) * mu mod n``."""
    _check_owner(pk, c)
    if sk.fingerprint != pk.fingerprint:
        raise KeyMismatch("private key does not match public key")
    if not 0 < c.value < pk.n_squared:
        raise CorruptCiphertext("ciphertext value outside (0, n^2)")
    x = mod_exp(c.value, sk.lam, pk.n_squared)
    if (x - 1) % pk.n:
        raise CorruptCiphertext("c^lambda mod n^2 is not 1 mod n")
    return _L(x, pk.n) * sk.mu % pk.n


def hadd(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Ciphertext product; decrypts to ``(m1 + m2) mod n``."""
    _check_owner(pk, c1, c2)
    return Ciphertext(c1.value * c2.value % pk.n_squared, pk.fingerprint)


def scalar_add(pk: PublicKey, c: Ciphertext, m2: int) -> Ciphertext:
    """``c * g^m2 mod n^2``; decrypts to ``(m1 + m2) mod n``."""
    _check_owner(pk, c)
    _check_plaintext(pk, m2)
    return Ciphertext(c.value * pk.g_pow(m2) % pk.n_squared, pk.fingerprint)


def scalar_mul(pk: PublicKey, c: Ciphertext, k: int) -> Ciphertext:
    """``c^k mod n^2``; decrypts to ``k * m mod n``."""
    _check_owner(pk, c)
    if k < 0:
        raise ValueError("scalar must be non-negative")
    return Ciphertext(mod_exp(c.value, k, pk.n_squared), pk.fingerprint)


# -- key files ---------------------------------------------------------------

_PUBLIC_FIELDS = ("n", "g")
_PRIVATE_FIELDS = ("lambda", "mu", "p", "q")


def serialize_key(pk: PublicKey, sk: PrivateKey | None = None) -> bytes:
    lines = [f"version {KEY_FILE_VERSION}", f"kind {'public' if sk is None else 'private'}"]
    lines += [f"n {pk.n:x}", f"g {pk.g:x}"]
    if sk is not None:
        if sk.fingerprint != pk.fingerprint:
            raise KeyMismatch("private key does not match public key")
        lines += [f"lambda {sk.lam:x}", f"mu {sk.mu:x}", f"p {sk.p:x}", f"q {sk.q:x}"]
    return ("\n".join(lines) + "\n").encode()


def _parse_hex(name: str, text: str) -> int:
    if not text or text != text.lower() or (len(text) > 1 and text[0] == "0"):
        raise KeyParseError(f"field {name!r} is not canonical lowercase hex")
    try:
        return int(text, 16)
    except ValueError:
        raise KeyParseError(f"field {name!r} is not hex: {text!r}") from None


def deserialize_key(data: bytes) -> tuple[PublicKey, PrivateKey | None]:
    """Parse a key file; returns ``(pk, sk)`` with ``sk`` None for public files."""
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise KeyParseError("key file is not ASCII") from None
    if not text.endswith("\n"):
        raise KeyParseError("key file is truncated (missing final newline)")
    pairs = []
    for lineno, line in enumerate(text[:-1].split("\n"), 1):
        parts = line.split(" ")
        if len(parts) != 2:
            raise KeyParseError(f"line {lineno}: expected '<field> <value>'")
        pairs.append(tuple(parts))

    if len(pairs) < 2 or pairs[0][0] != "version" or pairs[1][0] != "kind":
        raise KeyParseError("missing version/kind header")
    if pairs[0][1] != str(KEY_FILE_VERSION):
        raise KeyParseError(f"unsupported key file version {pairs[0][1]!r}")
    kind = pairs[1][1]
    if kind == "public":
        expected = _PUBLIC_FIELDS
    elif kind == "private":
        expected = _PUBLIC_FIELDS + _PRIVATE_FIELDS
    else:
        raise KeyParseError(f"unknown key kind {kind!r}")
    names = tuple(k for k, _ in pairs[2:])
    if names != expected:
        raise KeyParseError(f"expected fields {expected}, found {names}")
    vals = {k: _parse_hex(k, v) for k, v in pairs[2:]}

    try:
        if kind == "public":
            return PublicKey(vals["n"], vals["g"]), None
        pk, sk = from_primes(vals["p"], vals["q"], vals["g"])
    except (InvalidPrimes, InvalidGenerator) as e:
        raise KeyParseError(f"inconsistent key material: {e}") from e
    if (pk.n, sk.lam, sk.mu) != (vals["n"], vals["lambda"], vals["mu"]):
        raise KeyParseError("stored n/lambda/mu disagree with p, q, g")
    return pk, sk
