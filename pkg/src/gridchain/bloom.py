"""Per-group bloom filter over registered pseudonyms.

Indices use double hashing: ``H1 + i*H2 mod theta`` for ``i = 0..k-1``, with
H1 and H2 the first and second 64-bit big-endian words of
``SHA-256(b"gridchain/bloom" + key_bytes)``.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections.abc import Iterable
from dataclasses import dataclass

from .crypto_identity import Pseudonym, random_pseudonym

INDEX_TAG = b"gridchain/bloom"


class FilterParamError(ValueError):
    pass


@dataclass(frozen=True)
class FilterParams:
    theta: int
    k: int
    target_fpr: float
    capacity: int


def index_values(pk: Pseudonym, k: int, theta: int) -> list[int]:
    digest = hashlib.sha256(INDEX_TAG + pk.key_bytes).digest()
    h1 = int.from_bytes(digest[:8], "big")
    h2 = int.from_bytes(digest[8:16], "big")
    return [(h1 + i * h2) % theta for i in range(k)]


def size_filter(capacity: int, target_fpr: float) -> FilterParams:
    if capacity < 1:
        raise FilterParamError("capacity must be at least 1")
    if not 0.0 < target_fpr < 1.0:
        raise FilterParamError(f"target_fpr {target_fpr} outside (0, 1)")
    ln2 = math.log(2)
    theta = max(1, math.ceil(-capacity * math.log(target_fpr) / ln2**2))
    k = max(1, round(theta / capacity * ln2))
    return FilterParams(theta=theta, k=k, target_fpr=target_fpr, capacity=capacity)


class BloomFilter:
    """Plain (non-counting) bloom filter; frozen once built."""

    def __init__(self, theta: int, k: int, bits: bytes | None = None, group_id: str = ""):
        if theta < 1 or k < 1:
            raise FilterParamError("theta and k must be positive")
        nbytes = (theta + 7) // 8
        if bits is None:
            bits = bytes(nbytes)
        if len(bits) != nbytes:
            raise FilterParamError(f"expected {nbytes} bytes of bits, got {len(bits)}")
        if theta % 8 and bits[-1] >> (theta % 8):
            raise FilterParamError("padding bits beyond theta must be zero")
        self._theta = theta
        self._k = k
        self._bits = bytes(bits)
        self.group_id = group_id

    @property
    def theta(self) -> int:
        return self._theta

    @property
    def k(self) -> int:
        return self._k

    @property
    def bits(self) -> bytes:
        return self._bits

    def bit(self, index: int) -> bool:
        return bool(self._bits[index >> 3] >> (index & 7) & 1)

    def popcount(self) -> int:
        return int.from_bytes(self._bits, "little").bit_count()

    def __contains__(self, pk: Pseudonym) -> bool:
        return contains(self, pk)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return (self._theta, self._k, self._bits) == (other._theta, other._k, other._bits)

    def serialize(self) -> str:
        return f"bloom θ={self._theta} k={self._k}\n{self._bits.hex()}\n"

    @classmethod
    def parse(cls, text: str, group_id: str = "") -> BloomFilter:
        lines = text.splitlines()
        if len(lines) != 2:
            raise FilterParamError("bloom snapshot must have exactly two lines")
        head = lines[0].split(" ")
        if len(head) != 3 or head[0] != "bloom" or not head[1].startswith("θ=") or not head[2].startswith("k="):
            raise FilterParamError(f"bad bloom header: {lines[0]!r}")
        theta, k = int(head[1][2:]), int(head[2][2:])
        if lines[1] != lines[1].lower():
            raise FilterParamError("bit hex must be lowercase")
        return cls(theta, k, bytes.fromhex(lines[1]), group_id=group_id)


def build_filter(
    pseudonyms: Iterable[Pseudonym], params: FilterParams, group_id: str = ""
) -> BloomFilter:
    bits = bytearray((params.theta + 7) // 8)
    for pk in pseudonyms:
        for idx in index_values(pk, params.k, params.theta):
            bits[idx >> 3] |= 1 << (idx & 7)
    return BloomFilter(params.theta, params.k, bytes(bits), group_id=group_id)


def contains(bloom: BloomFilter, pk: Pseudonym) -> bool:
    bits = bloom.bits
    for idx in index_values(pk, bloom.k, bloom.theta):
        if not bits[idx >> 3] >> (idx & 7) & 1:
            return False
    return True


def analytic_fpr(theta: int, k: int, members: int) -> float:
    return (1.0 - math.exp(-k * members / theta)) ** k


def estimate_fpr(
    bloom: BloomFilter,
    member_set: Iterable[Pseudonym],
    trials: int,
    rng: random.Random,
    modulus_bits: int = 64,
) -> float:
    """Fraction of fresh non-member pseudonyms that the filter accepts."""
    if trials < 1:
        raise ValueError("trials must be positive")
    members = set(member_set)
    accepted = 0
    done = 0
    while done < trials:
        pk = random_pseudonym(modulus_bits, rng)
        if pk in members:
            continue
        done += 1
        accepted += contains(bloom, pk)
    return accepted / trials
