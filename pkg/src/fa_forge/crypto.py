"""Additive homomorphic encryption for the aggregation stages.

Paillier with the ``g = n + 1`` simplification::

    enc(m; r) = (1 + m*n) * r^n  mod n^2
    dec(c)    = L(c^lambda mod n^2) * mu  mod n,   L(x) = (x - 1) // n
    enc(a) (+) enc(b) = enc(a) * enc(b) mod n^2 = enc(a + b mod n)

A ``mock`` scheme (identity over Z_{2^64}) shares the interface for fast
tests. Randomness comes from a caller-supplied :class:`random.Random` so runs
are reproducible under a seed; this is a simulator, not a hardened library.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path

from .errors import CryptoError

try:  # GMP-backed modular exponentiation when available
    import gmpy2

    def _powmod(base: int, exp: int, mod: int) -> int:
        return int(gmpy2.powmod(base, exp, mod))
except ImportError:  # pragma: no cover
    _powmod = pow

DEFAULT_KEY_BITS = 2048
DEFAULT_SCALE = 100
MOCK_MODULUS = 2**64

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p**0.5) + 1))]


def _is_probable_prime(n: int, rng: random.Random, rounds: int = 40) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = _powmod(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = _powmod(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: random.Random) -> int:
    # top two bits set so the product of two such primes has the full bit length
    while True:
        cand = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if _is_probable_prime(cand, rng):
            return cand


@dataclass(frozen=True)
class PublicKey:
    n: int
    scheme: str = "paillier"

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(f"{self.scheme}:{self.n:x}".encode()).hexdigest()[:16]

    def __repr__(self) -> str:
        return f"PublicKey({self.scheme}, {self.n.bit_length()} bits, {self.fingerprint})"


@dataclass(frozen=True)
class SecretKey:
    public: PublicKey
    lam: int
    mu: int

    def __repr__(self) -> str:
        # never print secret material
        return f"SecretKey(<redacted>, {self.public.fingerprint})"


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    secret: SecretKey
    bits: int


@dataclass(frozen=True)
class Ciphertext:
    value: int
    fingerprint: str


def keygen(bits: int = DEFAULT_KEY_BITS, rng: random.Random | None = None) -> KeyPair:
    if bits < 64:
        raise CryptoError(f"key size {bits} too small (minimum 64 bits)", "bad-key-size")
    rng = rng or random.SystemRandom()
    p_bits = bits // 2
    while True:
        p = _random_prime(p_bits, rng)
        q = _random_prime(bits - p_bits, rng)
        if p == q:
            continue
        n = p * q
        if math.gcd(n, (p - 1) * (q - 1)) == 1:
            break
    lam = (p - 1) * (q - 1) // math.gcd(p - 1, q - 1)
    mu = pow(lam, -1, n)
    pk = PublicKey(n)
    return KeyPair(pk, SecretKey(pk, lam, mu), bits)


def mock_keygen() -> KeyPair:
    pk = PublicKey(MOCK_MODULUS, "mock")
    return KeyPair(pk, SecretKey(pk, 1, 1), 64)


def _check_plain(pk: PublicKey, m: int) -> None:
    if not isinstance(m, int) or not 0 <= m < pk.n:
        raise CryptoError(f"plaintext must be a residue in [0, n), got {m!r}", "out-of-range")


def encrypt(pk: PublicKey, m: int, rng: random.Random | None = None) -> Ciphertext:
    _check_plain(pk, m)
    if pk.scheme == "mock":
        return Ciphertext(m, pk.fingerprint)
    rng = rng or random.SystemRandom()
    n, n2 = pk.n, pk.nsquare
    while True:
        r = rng.randrange(1, n)
        if math.gcd(r, n) == 1:
            break
    return Ciphertext((1 + m * n) % n2 * _powmod(r, n, n2) % n2, pk.fingerprint)


def decrypt(sk: SecretKey, c: Ciphertext) -> int:
    pk = sk.public
    if c.fingerprint != pk.fingerprint:
        raise CryptoError("ciphertext was produced under a different key", "fingerprint-mismatch")
    if pk.scheme == "mock":
        return c.value % pk.n
    x = _powmod(c.value, sk.lam, pk.nsquare)
    return (x - 1) // pk.n * sk.mu % pk.n


def add_cipher(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    if c1.fingerprint != pk.fingerprint or c2.fingerprint != pk.fingerprint:
        raise CryptoError("cannot combine ciphertexts under different keys", "fingerprint-mismatch")
    if pk.scheme == "mock":
        return Ciphertext((c1.value + c2.value) % pk.n, pk.fingerprint)
    return Ciphertext(c1.value * c2.value % pk.nsquare, pk.fingerprint)


# fixed-point codec --------------------------------------------------------

def _scaled(x, scale: int) -> int:
    d = Decimal(str(x)) if not isinstance(x, Fraction) else Decimal(x.numerator) / Decimal(x.denominator)
    return int((d * scale).to_integral_value(rounding=ROUND_HALF_UP))


def encode_fixed(x, scale: int = DEFAULT_SCALE, n: int | None = None) -> int:
    """Round half away from zero to ``1/scale``; negatives wrap into ``(n/2, n)``."""
    v = _scaled(x, scale)
    if n is None:
        return v
    if 2 * abs(v) >= n:
        raise CryptoError(f"value {x} overflows the plaintext space at scale {scale}", "overflow")
    return v % n


def decode_fixed(r: int, scale: int = DEFAULT_SCALE, n: int | None = None) -> Fraction:
    if n is not None and r > n // 2:
        r -= n
    return Fraction(r, scale)


# key files ------------------------------------------------------------------

def keys_to_json(kp: KeyPair) -> str:
    return json.dumps({
        "scheme": kp.public.scheme,
        "bits": kp.bits,
        "n": format(kp.public.n, "x"),
        "lambda": format(kp.secret.lam, "x"),
        "mu": format(kp.secret.mu, "x"),
    }, indent=2, sort_keys=True)


def keys_from_json(text: str) -> KeyPair:
    try:
        raw = json.loads(text)
        pk = PublicKey(int(raw["n"], 16), raw.get("scheme", "paillier"))
        return KeyPair(pk, SecretKey(pk, int(raw["lambda"], 16), int(raw["mu"], 16)), int(raw["bits"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise CryptoError(f"malformed key file: {exc}", "bad-key-file") from None


def load_keys(path: str | Path) -> KeyPair:
    return keys_from_json(Path(path).read_text(encoding="utf-8"))
