import itertools

import pytest
from hypothesis import given, settings, strategies as st

from oracles import toy_paillier_decrypt, toy_paillier_encrypt
from ppdl.errors import (
    CorruptCiphertext,
    InvalidGenerator,
    InvalidPrimes,
    InvalidRandomizer,
    KeyMismatch,
    KeyParseError,
    PlaintextTooLarge,
)
from ppdl.numtheory import gcd, lcm
from ppdl.paillier import (
    Ciphertext,
    decrypt,
    deserialize_key,
    encrypt,
    encrypt_random,
    from_primes,
    hadd,
    keygen,
    scalar_add,
    scalar_mul,
    serialize_key,
)
from ppdl.rng import SplitMix64

TOY_RS = [r for r in range(1, 35) if gcd(r, 35) == 1]


def test_from_primes_toy(toy_keys):
    pk, sk = toy_keys
    assert (pk.n, pk.g, pk.n_squared) == (35, 36, 1225)
    assert (sk.lam, sk.mu) == (12, 3)
    assert sk.fingerprint == pk.fingerprint


def test_from_primes_rejects_equal_or_composite():
    with pytest.raises(InvalidPrimes):
        from_primes(5, 5, 26)
    with pytest.raises(InvalidPrimes):
        from_primes(5, 9)
    # p=3, q=7: gcd(21, 12) = 3 fails the keygen condition
    with pytest.raises(InvalidPrimes):
        from_primes(3, 7)


def test_from_primes_rejects_bad_generator():
    with pytest.raises(InvalidGenerator):
        from_primes(5, 7, 35)
    with pytest.raises(InvalidGenerator):
        from_primes(5, 7, 1225)


def test_from_primes_generator_validity_matches_oracle():
    # every g in Z_{n^2} on the toy key: accepted iff L(g^lambda) is a unit mod n
    from oracles import naive_pow

    for g in range(1, 1225):
        x = naive_pow(g, 12, 1225)
        valid = (x - 1) % 35 == 0 and gcd((x - 1) // 35, 35) == 1
        if valid:
            pk, sk = from_primes(5, 7, g)
            assert all(decrypt(sk, pk, encrypt(pk, m, 2)) == m for m in (0, 1, 17, 34))
        else:
            with pytest.raises(InvalidGenerator):
                from_primes(5, 7, g)


def test_encrypt_toy_values(toy_keys):
    pk, sk = toy_keys
    assert encrypt(pk, 3, 4).value == 44 == toy_paillier_encrypt(3, 4)
    assert encrypt(pk, 0, 1).value == 1
    assert decrypt(sk, pk, Ciphertext(44, pk.fingerprint)) == 3
    assert decrypt(sk, pk, encrypt(pk, 0, 1)) == 0


def test_encrypt_argument_checks(toy_keys):
    pk, _ = toy_keys
    with pytest.raises(InvalidRandomizer):
        encrypt(pk, 3, 40)
    with pytest.raises(InvalidRandomizer):
        encrypt(pk, 3, 0)
    with pytest.raises(InvalidRandomizer):
        encrypt(pk, 3, 7)
    with pytest.raises(PlaintextTooLarge):
        encrypt(pk, 35, 2)
    with pytest.raises(PlaintextTooLarge):
        encrypt(pk, -1, 2)


def test_toy_exhaustive_against_oracle(toy_keys):
    pk, sk = toy_keys
    for m, r in itertools.product(range(35), TOY_RS):
        c = encrypt(pk, m, r)
        assert c.value == toy_paillier_encrypt(m, r)
        assert decrypt(sk, pk, c) == m == toy_paillier_decrypt(c.value)


def test_g_pow_closed_form_matches_modexp(key512):
    pk, _ = key512
    rng = SplitMix64(0)
    for _ in range(20):
        m = rng.randbelow(pk.n)
        assert pk.g_pow(m) == pow(pk.g, m, pk.n_squared)


def test_keygen_deterministic_and_valid():
    a = keygen(16, SplitMix64(11))
    b = keygen(16, SplitMix64(11))
    assert serialize_key(*a) == serialize_key(*b)
    pk, sk = a
    assert gcd(pk.n, (sk.p - 1) * (sk.q - 1)) == 1
    assert pk.n == sk.p * sk.q and sk.p != sk.q
    assert sk.lam == lcm(sk.p - 1, sk.q - 1)
    rng = SplitMix64(1)
    for _ in range(100):
        m = rng.randbelow(pk.n)
        assert decrypt(sk, pk, encrypt_random(pk, m, rng)) == m


def test_keygen_rejects_small_bits():
    with pytest.raises(ValueError):
        keygen(8, SplitMix64(0))


def test_keygen_random_generator():
    pk, sk = keygen(32, SplitMix64(5), random_g=True)
    assert pk.g != pk.n + 1
    rng = SplitMix64(6)
    for _ in range(50):
        m = rng.randbelow(pk.n)
        c = encrypt_random(pk, m, rng)
        assert decrypt(sk, pk, c) == m
        assert decrypt(sk, pk, scalar_add(pk, c, 5)) == (m + 5) % pk.n


def test_encrypt_random_properties(key512):
    pk, sk = key512
    a = encrypt_random(pk, 42, SplitMix64(1))
    assert a == encrypt_random(pk, 42, SplitMix64(1))
    b = encrypt_random(pk, 42, SplitMix64(2))
    assert a.value != b.value
    assert decrypt(sk, pk, a) == decrypt(sk, pk, b) == 42
    top = encrypt_random(pk, pk.n - 1, SplitMix64(3))
    assert decrypt(sk, pk, top) == pk.n - 1
    with pytest.raises(PlaintextTooLarge):
        encrypt_random(pk, pk.n, SplitMix64(3))


def test_randomized_roundtrip_512(key512):
    pk, sk = key512
    rng = SplitMix64(77)
    for _ in range(50):
        m = rng.randbelow(pk.n)
        c = encrypt_random(pk, m, rng)
        assert 0 < c.value < pk.n_squared and gcd(c.value, pk.n) == 1
        assert decrypt(sk, pk, c) == m


def test_decrypt_key_checks(toy_keys, key512):
    pk, sk = toy_keys
    big_pk, big_sk = key512
    with pytest.raises(KeyMismatch):
        decrypt(sk, pk, encrypt(big_pk, 1, 2))
    with pytest.raises(KeyMismatch):
        decrypt(big_sk, pk, encrypt(pk, 1, 2))
    with pytest.raises(CorruptCiphertext):
        decrypt(sk, pk, Ciphertext(5, pk.fingerprint))
    with pytest.raises(CorruptCiphertext):
        decrypt(sk, pk, Ciphertext(1225, pk.fingerprint))


def test_hadd_examples(toy_keys):
    pk, sk = toy_keys
    c = hadd(pk, encrypt(pk, 3, 4), encrypt(pk, 5, 2))
    assert decrypt(sk, pk, c) == 8
    assert c.value == toy_paillier_encrypt(3, 4) * toy_paillier_encrypt(5, 2) % 1225
    assert decrypt(sk, pk, hadd(pk, encrypt(pk, 17, 3), encrypt(pk, 0, 6))) == 17
    assert decrypt(sk, pk, hadd(pk, encrypt(pk, 30, 2), encrypt(pk, 10, 3))) == 5


def test_hadd_exhaustive_toy(toy_keys):
    pk, sk = toy_keys
    for m1, m2 in itertools.product(range(35), repeat=2):
        c = hadd(pk, encrypt(pk, m1, 2), encrypt(pk, m2, 3))
        assert decrypt(sk, pk, c) == (m1 + m2) % 35


def test_hadd_commutative_associative_toy(toy_keys):
    pk, sk = toy_keys
    for m1, m2, m3 in itertools.product(range(0, 35, 4), repeat=3):
        a, b, c = encrypt(pk, m1, 2), encrypt(pk, m2, 3), encrypt(pk, m3, 4)
        expected = (m1 + m2 + m3) % 35
        for x, y, z in itertools.permutations((a, b, c)):
            assert decrypt(sk, pk, hadd(pk, hadd(pk, x, y), z)) == expected
            assert decrypt(sk, pk, hadd(pk, x, hadd(pk, y, z))) == expected


def test_hadd_key_mismatch(toy_keys, key512):
    pk, _ = toy_keys
    big_pk, _ = key512
    with pytest.raises(KeyMismatch):
        hadd(pk, encrypt(pk, 1, 2), encrypt(big_pk, 1, 2))


def test_scalar_add_examples(toy_keys):
    pk, sk = toy_keys
    c = encrypt(pk, 3, 4)
    assert decrypt(sk, pk, scalar_add(pk, c, 5)) == 8
    assert decrypt(sk, pk, scalar_add(pk, c, 0)) == 3
    assert decrypt(sk, pk, scalar_add(pk, encrypt(pk, 34, 2), 1)) == 0
    with pytest.raises(PlaintextTooLarge):
        scalar_add(pk, c, 35)


def test_scalar_add_exhaustive_toy(toy_keys):
    pk, sk = toy_keys
    for m1, m2 in itertools.product(range(35), repeat=2):
        assert decrypt(sk, pk, scalar_add(pk, encrypt(pk, m1, 6), m2)) == (m1 + m2) % 35


def test_scalar_mul_examples(toy_keys):
    pk, sk = toy_keys
    assert decrypt(sk, pk, scalar_mul(pk, encrypt(pk, 3, 2), 2)) == 6
    assert decrypt(sk, pk, scalar_mul(pk, encrypt(pk, 3, 2), 1)) == 3
    assert decrypt(sk, pk, scalar_mul(pk, encrypt(pk, 12, 2), 3)) == 1
    for m, k in itertools.product(range(35), range(0, 40, 3)):
        assert decrypt(sk, pk, scalar_mul(pk, encrypt(pk, m, 4), k)) == k * m % 35


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**1000), st.integers(0, 2**1000))
def test_homomorphisms_512(key512, a, b):
    pk, sk = key512
    m1, m2 = a % pk.n, b % pk.n
    rng = SplitMix64(a ^ b)
    c1, c2 = encrypt_random(pk, m1, rng), encrypt_random(pk, m2, rng)
    assert decrypt(sk, pk, hadd(pk, c1, c2)) == (m1 + m2) % pk.n
    assert decrypt(sk, pk, scalar_add(pk, c1, m2)) == (m1 + m2) % pk.n


def test_key_serialization_toy(toy_keys):
    pk, sk = toy_keys
    data = serialize_key(pk, sk)
    assert data == b"version 1\nkind private\nn 23\ng 24\nlambda c\nmu 3\np 5\nq 7\n"
    pk2, sk2 = deserialize_key(data)
    assert (pk2, sk2) == (pk, sk)
    pub, none = deserialize_key(serialize_key(pk))
    assert pub == pk and none is None
    assert pub.fingerprint == pk.fingerprint


def test_key_serialization_512_canonical(key512):
    pk, sk = key512
    data = serialize_key(pk, sk)
    pk2, sk2 = deserialize_key(data)
    assert serialize_key(pk2, sk2) == data
    assert pk2.fingerprint == pk.fingerprint


@pytest.mark.parametrize(
    "data",
    [
        b"",
        b"version 1\nkind private\nn 23\ng 24\nlambda c\nmu 3\np 5\n",  # truncated
        b"version 1\nkind private\nn 23\ng 24\nlambda c\nmu 3\np 5\nq 7",  # no final newline
        b"version 2\nkind public\nn 23\ng 24\n",
        b"version 1\nkind secret\nn 23\ng 24\n",
        b"version 1\nkind public\ng 24\nn 23\n",
        b"version 1\nkind public\nn 0x23\ng 24\n",
        b"version 1\nkind public\nn 023\ng 24\n",
        b"version 1\nkind public\nn 2A\ng 24\n",
        b"version 1\nkind public\nn zz\ng 24\n",
        b"version 1\nkind private\nn 23\ng 24\nlambda c\nmu 4\np 5\nq 7\n",  # wrong mu
        b"version 1\nkind private\nn 23\ng 23\nlambda c\nmu 3\np 5\nq 7\n",  # bad g
        b"\xff\xfe",
    ],
)
def test_key_parse_errors(data):
    with pytest.raises(KeyParseError):
        deserialize_key(data)
