"""Pseudonym keys, registration with the key authority, and reading signatures.

A pseudonym is an RSA public key.  Following the protocol's naming, the
*private* exponent is ``e`` and the *public* exponent is ``d``; signing is
``z**e mod n`` over the SHA-256 digest of the reading payload and
verification checks ``sig**d mod n``.  Verification reveals nothing beyond
the pseudonym itself, which is all the protocol calls its "zero knowledge
proof"; it is an ordinary signature check, not a ZK protocol.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass, field
from functools import cached_property

PRODUCTION_MIN_BITS = 512
TEST_MIN_BITS = 64
MR_ROUNDS = 40
PAYLOAD_TAG = 0x01

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1
UINT64_MAX = (1 << 64) - 1

_SMALL_PRIMES = [
    p for p in range(3, 1000) if all(p % q for q in range(2, int(p**0.5) + 1))
]
_SMALL_PRODUCT = math.prod(_SMALL_PRIMES)


class KeySizeError(ValueError):
    pass


class RegistrationConflict(Exception):
    pass


class EncodingError(ValueError):
    pass


def _int_bytes(value: int) -> bytes:
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def _parse_int_field(data: bytes, offset: int) -> tuple[int, int]:
    if offset + 4 > len(data):
        raise EncodingError("truncated length prefix")
    (length,) = struct.unpack_from(">I", data, offset)
    offset += 4
    if length == 0 or offset + length > len(data):
        raise EncodingError("bad integer length")
    raw = data[offset : offset + length]
    if length > 1 and raw[0] == 0:
        raise EncodingError("non-minimal integer encoding")
    return int.from_bytes(raw, "big"), offset + length


@dataclass(frozen=True, order=True)
class Pseudonym:
    """Public key used as a disposable identity; ordered bytewise."""

    key_bytes: bytes

    @classmethod
    def from_public(cls, n: int, d: int) -> Pseudonym:
        nb, db = _int_bytes(n), _int_bytes(d)
        return cls(struct.pack(">I", len(nb)) + nb + struct.pack(">I", len(db)) + db)

    @classmethod
    def from_hex(cls, text: str) -> Pseudonym:
        if text != text.lower():
            raise EncodingError("pseudonym hex must be lowercase")
        return cls(bytes.fromhex(text))

    @cached_property
    def public_numbers(self) -> tuple[int, int]:
        """``(n, d)``; raises :class:`EncodingError` on a malformed key."""
        n, offset = _parse_int_field(self.key_bytes, 0)
        d, offset = _parse_int_field(self.key_bytes, offset)
        if offset != len(self.key_bytes):
            raise EncodingError("trailing bytes in pseudonym")
        return n, d

    def hex(self) -> str:
        return self.key_bytes.hex()

    def __repr__(self) -> str:
        return f"Pseudonym({self.hex()[:16]}...)"


@dataclass(frozen=True)
class KeyPair:
    n: int
    e: int  # private exponent
    d: int  # public exponent
    modulus_bits: int

    @property
    def public_key(self) -> tuple[int, int]:
        return self.n, self.d

    @property
    def private_key(self) -> tuple[int, int]:
        return self.n, self.e

    @cached_property
    def pseudonym(self) -> Pseudonym:
        return Pseudonym.from_public(self.n, self.d)


def is_probable_prime(n: int, rng: random.Random, rounds: int = MR_ROUNDS) -> bool:
    """Miller-Rabin with bases drawn from ``rng``."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    if n < 1000:
        return n in _SMALL_PRIMES
    if math.gcd(n, _SMALL_PRODUCT) != 1:
        return False
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng: random.Random) -> int:
    # top two bits set so the product of two such primes has the full width
    top = (1 << (bits - 1)) | (1 << (bits - 2))
    while True:
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate, rng):
            return candidate


def generate_keypair(
    modulus_bits: int, rng: random.Random, *, test_mode: bool = False
) -> KeyPair:
    floor = TEST_MIN_BITS if test_mode else PRODUCTION_MIN_BITS
    if modulus_bits < floor:
        raise KeySizeError(f"modulus_bits={modulus_bits} below floor {floor}")
    p_bits = modulus_bits // 2
    q_bits = modulus_bits - p_bits
    p = random_prime(p_bits, rng)
    q = random_prime(q_bits, rng)
    while q == p:
        q = random_prime(q_bits, rng)
    n = p * q
    phi = (p - 1) * (q - 1)
    while True:
        e = rng.randrange(3, phi)
        if math.gcd(e, phi) == 1:
            break
    d = pow(e, -1, phi)
    return KeyPair(n=n, e=e, d=d, modulus_bits=modulus_bits)


def random_pseudonym(modulus_bits: int, rng: random.Random) -> Pseudonym:
    """Pseudonym-shaped key bytes with no private half.

    Used where only the identity bytes matter (bloom false-positive trials,
    benchmarks); cheaper than a real key generation by orders of magnitude.
    """
    n = rng.getrandbits(modulus_bits) | (1 << (modulus_bits - 1)) | 1
    d = rng.randrange(3, n)
    return Pseudonym.from_public(n, d)


@dataclass
class RegistryEntry:
    user_id: str
    group_id: str
    pseudonyms: list[Pseudonym] = field(default_factory=list)


class KeyAuthority:
    """Key management center: issues pseudonym keys and keeps the registry.

    The registry maps users to pseudonyms and is only ever handed to the
    billing side; private keys are kept until collected by the owning meter.
    """

    def __init__(self, modulus_bits: int, *, test_mode: bool = False):
        self.modulus_bits = modulus_bits
        self.test_mode = test_mode
        self._entries: dict[tuple[str, str], RegistryEntry] = {}
        self._issued: set[Pseudonym] = set()
        self._outbox: dict[tuple[str, str], list[KeyPair]] = {}

    def register_user(
        self, user_id: str, count: int, group_id: str, rng: random.Random
    ) -> list[Pseudonym]:
        if count < 1:
            raise ValueError("count must be positive")
        key = (group_id, user_id)
        if key in self._entries:
            raise RegistrationConflict(f"{user_id!r} already registered in {group_id!r}")
        keys: list[KeyPair] = []
        while len(keys) < count:
            kp = generate_keypair(self.modulus_bits, rng, test_mode=self.test_mode)
            if kp.pseudonym in self._issued:
                continue
            self._issued.add(kp.pseudonym)
            keys.append(kp)
        entry = RegistryEntry(user_id, group_id, [kp.pseudonym for kp in keys])
        self._entries[key] = entry
        self._outbox[key] = keys
        return list(entry.pseudonyms)

    def collect_keys(self, user_id: str, group_id: str) -> list[KeyPair]:
        """Hand the private halves to the meter; the authority forgets them."""
        return self._outbox.pop((group_id, user_id))

    def entries(self, group_id: str | None = None) -> list[RegistryEntry]:
        return [
            e for e in self._entries.values() if group_id is None or e.group_id == group_id
        ]

    def group_pseudonyms(self, group_id: str) -> list[Pseudonym]:
        return [pk for e in self.entries(group_id) for pk in e.pseudonyms]


def canonical_payload(share: int, slot: int, pk: Pseudonym) -> bytes:
    if not INT64_MIN <= share <= INT64_MAX:
        raise EncodingError(f"share {share} outside signed 64-bit range")
    if not 0 <= slot <= UINT64_MAX:
        raise EncodingError(f"slot {slot} outside unsigned 64-bit range")
    return (
        bytes([PAYLOAD_TAG])
        + struct.pack(">qQI", share, slot, len(pk.key_bytes))
        + pk.key_bytes
    )


def payload_digest(share: int, slot: int, pk: Pseudonym) -> int:
    return int.from_bytes(hashlib.sha256(canonical_payload(share, slot, pk)).digest(), "big")


def sign_digest(private_key: tuple[int, int], digest: int) -> int:
    n, e = private_key
    return pow(digest % n, e, n)


def verify_digest(public_key: tuple[int, int], digest: int, signature: int) -> bool:
    n, d = public_key
    if n < 2 or not 0 <= signature < n:
        return False
    return pow(signature, d, n) == digest % n


def sign_reading(private_key: tuple[int, int], share: int, slot: int, pk: Pseudonym) -> int:
    # a private key that does not match pk is not detected here; verification fails later
    return sign_digest(private_key, payload_digest(share, slot, pk))


def verify_signature(share: int, slot: int, pk: Pseudonym, signature: int) -> bool:
    try:
        public_key = pk.public_numbers
        digest = payload_digest(share, slot, pk)
    except (EncodingError, TypeError):
        return False
    return verify_digest(public_key, digest, signature)


def verify_reading(msg) -> bool:
    """True iff ``msg.signature`` validates under ``msg.pseudonym``."""
    try:
        return verify_signature(msg.share_wh, msg.slot, msg.pseudonym, msg.signature)
    except AttributeError:
        return False
