"""Meter-side reading generation, share splitting and message assembly."""

from __future__ import annotations

import random
import struct
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from .crypto_identity import (
    INT64_MAX,
    INT64_MIN,
    PAYLOAD_TAG,
    EncodingError,
    KeyPair,
    Pseudonym,
    canonical_payload,
    sign_reading,
)

NOISE_FLOOR_WH = 1000
INT128_MIN = -(1 << 127)
INT128_MAX = (1 << 127) - 1


class AllocationError(ValueError):
    pass


class AggregationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Reading:
    user_id: str
    slot: int
    value_wh: int


@dataclass(frozen=True)
class ReadingMessage:
    share_wh: int
    slot: int
    pseudonym: Pseudonym
    signature: int

    def payload(self) -> bytes:
        return canonical_payload(self.share_wh, self.slot, self.pseudonym)

    def encode(self) -> bytes:
        """Merkle leaf bytes: payload, then the length-prefixed signature."""
        sig = self.signature.to_bytes(max(1, (self.signature.bit_length() + 7) // 8), "big")
        return self.payload() + struct.pack(">I", len(sig)) + sig

    @classmethod
    def decode(cls, data: bytes) -> ReadingMessage:
        msg, end = cls.decode_from(data, 0)
        if end != len(data):
            raise EncodingError("trailing bytes after message")
        return msg

    @classmethod
    def decode_from(cls, data: bytes, offset: int) -> tuple[ReadingMessage, int]:
        if offset + 21 > len(data) or data[offset] != PAYLOAD_TAG:
            raise EncodingError("bad message header")
        share, slot, klen = struct.unpack_from(">qQI", data, offset + 1)
        offset += 21
        if offset + klen + 4 > len(data):
            raise EncodingError("truncated pseudonym")
        key = data[offset : offset + klen]
        offset += klen
        (slen,) = struct.unpack_from(">I", data, offset)
        offset += 4
        if slen == 0 or offset + slen > len(data):
            raise EncodingError("bad signature length")
        raw = data[offset : offset + slen]
        if slen > 1 and raw[0] == 0:
            raise EncodingError("non-minimal signature encoding")
        return cls(share, slot, Pseudonym(key), int.from_bytes(raw, "big")), offset + slen


def split_reading(
    reading: Reading,
    pseudonyms: Sequence[Pseudonym],
    part_count: int,
    rng: random.Random,
) -> list[tuple[Pseudonym, int]]:
    """Split a reading into ``part_count`` shares that sum to it exactly.

    Shares other than the last are uniform in ``[-B, B]`` with
    ``B = max(|value|, 1000)``, so individual shares are often negative.
    """
    if not pseudonyms:
        raise AllocationError("no pseudonyms to allocate to")
    if len(set(pseudonyms)) != len(pseudonyms):
        raise AllocationError("pseudonyms must be distinct")
    if not 1 <= part_count <= len(pseudonyms):
        raise AllocationError(f"part_count {part_count} not in [1, {len(pseudonyms)}]")
    chosen = rng.sample(list(pseudonyms), part_count)
    bound = max(abs(reading.value_wh), NOISE_FLOOR_WH)
    shares = [rng.randint(-bound, bound) for _ in range(part_count - 1)]
    shares.append(reading.value_wh - sum(shares))
    return list(zip(chosen, shares))


@dataclass
class Meter:
    """A simulated smart meter holding its private pseudonym keys.

    ``source`` maps a slot to the true consumption in watt-hours.  Pseudonyms
    are handed out round-robin across slots, never twice within one slot.
    """

    user_id: str
    keys: list[KeyPair]
    source: Callable[[int], int]
    cursor: int = 0
    sent: dict[int, list[ReadingMessage]] = field(default_factory=dict)

    @property
    def pseudonyms(self) -> list[Pseudonym]:
        return [kp.pseudonym for kp in self.keys]

    def next_pseudonyms(self, count: int) -> list[KeyPair]:
        pool = len(self.keys)
        picked = [self.keys[(self.cursor + i) % pool] for i in range(count)]
        self.cursor = (self.cursor + count) % pool
        return picked

    def read(self, slot: int) -> Reading:
        return Reading(self.user_id, slot, self.source(slot))


def make_messages(meter: Meter, slot: int, rng: random.Random) -> list[ReadingMessage]:
    if not meter.keys:
        raise AllocationError(f"meter {meter.user_id!r} holds no pseudonyms")
    reading = meter.read(slot)
    part_count = rng.randint(1, len(meter.keys))
    keys = meter.next_pseudonyms(part_count)
    by_pk = {kp.pseudonym: kp for kp in keys}
    parts = split_reading(reading, [kp.pseudonym for kp in keys], part_count, rng)
    messages = [
        ReadingMessage(share, slot, pk, sign_reading(by_pk[pk].private_key, share, slot, pk))
        for pk, share in parts
    ]
    meter.sent[slot] = messages
    return messages


def aggregate(messages: Sequence[ReadingMessage]) -> int:
    total = 0
    for msg in messages:
        if not INT64_MIN <= msg.share_wh <= INT64_MAX:
            raise AggregationError(f"share {msg.share_wh} outside signed 64-bit range")
        total += msg.share_wh
        if not INT128_MIN <= total <= INT128_MAX:
            raise AggregationError("running sum overflowed signed 128-bit range")
    return total
