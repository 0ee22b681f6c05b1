from __future__ import annotations

import random
from fractions import Fraction

import pytest

from fa_forge.crypto import (
    add_cipher,
    decode_fixed,
    decrypt,
    encode_fixed,
    encrypt,
    keygen,
    keys_from_json,
    keys_to_json,
    mock_keygen,
)
from fa_forge.errors import CryptoError


@pytest.fixture(scope="module")
def kp():
    return keygen(64, random.Random(1))


def test_keygen_is_deterministic_under_seed(kp):
    again = keygen(64, random.Random(1))
    assert (again.public.n, again.secret.lam, again.secret.mu) == (kp.public.n, kp.secret.lam, kp.secret.mu)


def test_bit_length_over_seeded_runs():
    for s in range(100):
        n = keygen(64, random.Random(s)).public.n
        assert abs(n.bit_length() - 64) <= 1


def test_zero_roundtrip(kp):
    assert decrypt(kp.secret, encrypt(kp.public, 0, random.Random(0))) == 0


def test_homomorphic_examples(kp):
    rng = random.Random(5)
    enc = lambda m: encrypt(kp.public, m, rng)
    assert decrypt(kp.secret, add_cipher(kp.public, enc(3), enc(4))) == 7
    assert decrypt(kp.secret, add_cipher(kp.public, enc(12345), enc(0))) == 12345


def test_fold_of_ones(kp):
    rng = random.Random(9)
    acc = encrypt(kp.public, 0, rng)
    for _ in range(10_000):
        acc = add_cipher(kp.public, acc, encrypt(kp.public, 1, rng))
    assert decrypt(kp.secret, acc) == 10_000


def test_ciphertexts_are_randomized(kp):
    rng = random.Random(3)
    assert encrypt(kp.public, 5, rng).value != encrypt(kp.public, 5, rng).value


def test_out_of_range_and_mismatched_keys(kp):
    with pytest.raises(CryptoError) as exc:
        encrypt(kp.public, kp.public.n)
    assert exc.value.code == "out-of-range"
    other = keygen(64, random.Random(2))
    with pytest.raises(CryptoError) as exc:
        add_cipher(kp.public, encrypt(kp.public, 1), encrypt(other.public, 1))
    assert exc.value.code == "fingerprint-mismatch"
    with pytest.raises(CryptoError):
        keygen(32)


def test_fixed_point_examples(kp):
    n = kp.public.n
    assert encode_fixed(12.34, 100) == 1234
    assert decode_fixed(encode_fixed(-5.5, 100, n), 100, n) == Fraction(-11, 2)


def test_fixed_point_sum_matches_plaintext(kp):
    rng = random.Random(4)
    n = kp.public.n
    for _ in range(50):
        xs = [Fraction(rng.randint(-100000, 100000), 100) for _ in range(rng.randint(1, 20))]
        total = sum(encode_fixed(x, 100, n) for x in xs) % n
        assert decode_fixed(total, 100, n) == sum(xs)


def test_overflow_is_detected():
    with pytest.raises(CryptoError) as exc:
        encode_fixed(2**70, 100, mock_keygen().public.n)
    assert exc.value.code == "overflow"


def test_key_file_roundtrip_hides_secret_in_repr(kp):
    back = keys_from_json(keys_to_json(kp))
    assert back.public.n == kp.public.n and back.secret.lam == kp.secret.lam
    assert str(kp.secret.lam) not in repr(kp.secret)


def test_mock_scheme_shares_interface():
    m = mock_keygen()
    c = add_cipher(m.public, encrypt(m.public, 2), encrypt(m.public, 3))
    assert decrypt(m.secret, c) == 5
