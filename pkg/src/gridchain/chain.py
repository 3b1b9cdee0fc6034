"""Slot consensus and the per-group ledger.

There is no proof of work.  Each slot the pseudonym whose share lies closest
to the slot average mines the block; "closest" is decided exactly by
comparing ``|count*share - sum|``.  Ties make every tied pseudonym a miner,
and because the block content does not depend on who builds it, the header
records the least tied pseudonym.
"""

from __future__ import annotations

import hashlib
import struct
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

from .bloom import BloomFilter, contains
from .crypto_identity import EncodingError, Pseudonym, verify_reading
from .metering import INT128_MAX, INT128_MIN, ReadingMessage, aggregate

GENESIS_HASH = bytes(32)
FULL = "full"
OWN_ONLY = "own-only"


class NoQuorumError(ValueError):
    pass


class ChainError(RuntimeError):
    """Contract violation on the ledger (e.g. appending an unverified block)."""


@dataclass(frozen=True)
class SlotAverage:
    sum_wh: int
    count: int

    def as_fraction(self) -> Fraction:
        return Fraction(self.sum_wh, self.count)


@dataclass(frozen=True)
class BlockHeader:
    prev_hash: bytes
    merkle_root: bytes
    slot: int
    miner: Pseudonym
    average: SlotAverage

    def encode(self) -> bytes:
        if not INT128_MIN <= self.average.sum_wh <= INT128_MAX:
            raise EncodingError("slot sum outside signed 128-bit range")
        key = self.miner.key_bytes
        return (
            self.prev_hash
            + self.merkle_root
            + struct.pack(">QI", self.slot, len(key))
            + key
            + self.average.sum_wh.to_bytes(16, "big", signed=True)
            + struct.pack(">Q", self.average.count)
        )

    @classmethod
    def decode_from(cls, data: bytes, offset: int) -> tuple[BlockHeader, int]:
        if offset + 76 > len(data):
            raise EncodingError("truncated header")
        prev = data[offset : offset + 32]
        root = data[offset + 32 : offset + 64]
        slot, klen = struct.unpack_from(">QI", data, offset + 64)
        offset += 76
        if offset + klen + 24 > len(data):
            raise EncodingError("truncated header")
        miner = Pseudonym(data[offset : offset + klen])
        offset += klen
        total = int.from_bytes(data[offset : offset + 16], "big", signed=True)
        (count,) = struct.unpack_from(">Q", data, offset + 16)
        return cls(prev, root, slot, miner, SlotAverage(total, count)), offset + 24

    @property
    def hash(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[ReadingMessage, ...]

    @property
    def hash(self) -> bytes:
        return self.header.hash

    @property
    def slot(self) -> int:
        return self.header.slot

    @cached_property
    def tx_set(self) -> frozenset[ReadingMessage]:
        return frozenset(self.transactions)

    def encode(self) -> bytes:
        out = [self.header.encode(), struct.pack(">I", len(self.transactions))]
        for tx in self.transactions:
            leaf = tx.encode()
            out.append(struct.pack(">I", len(leaf)) + leaf)
        return b"".join(out)

    @classmethod
    def decode(cls, data: bytes) -> Block:
        header, offset = BlockHeader.decode_from(data, 0)
        if offset + 4 > len(data):
            raise EncodingError("truncated transaction count")
        (n,) = struct.unpack_from(">I", data, offset)
        offset += 4
        txs = []
        for _ in range(n):
            if offset + 4 > len(data):
                raise EncodingError("truncated transaction")
            (length,) = struct.unpack_from(">I", data, offset)
            offset += 4
            end = offset + length
            if end > len(data):
                raise EncodingError("truncated transaction")
            tx, used = ReadingMessage.decode_from(data[:end], offset)
            if used != end:
                raise EncodingError("transaction length mismatch")
            txs.append(tx)
            offset = end
        if offset != len(data):
            raise EncodingError("trailing bytes after block")
        return cls(header, tuple(txs))


@dataclass(frozen=True)
class Chain:
    group_id: str
    blocks: tuple[Block, ...] = ()

    @property
    def tip_hash(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else GENESIS_HASH

    @property
    def last_slot(self) -> int | None:
        return self.blocks[-1].slot if self.blocks else None

    def __len__(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str | None = None
    slot: int | None = None
    index: int | None = None  # position in the chain, for validate_chain

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = Verdict(True)


def select_miner(messages: Sequence[ReadingMessage]) -> tuple[list[Pseudonym], SlotAverage]:
    if not messages:
        raise NoQuorumError("no messages in slot")
    total = aggregate(messages)
    count = len(messages)
    best = min(abs(count * m.share_wh - total) for m in messages)
    winners = sorted({m.pseudonym for m in messages if abs(count * m.share_wh - total) == best})
    return winners, SlotAverage(total, count)


def _leaf_hash(leaf: bytes) -> bytes:
    return hashlib.sha256(b"\x00" + leaf).digest()


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    if not leaves:
        raise ValueError("merkle root of zero leaves is undefined")
    level = [_leaf_hash(leaf) for leaf in leaves]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [
            hashlib.sha256(b"\x01" + level[i] + level[i + 1]).digest()
            for i in range(0, len(level), 2)
        ]
    return level[0]


def canonical_order(messages: Iterable[ReadingMessage]) -> tuple[ReadingMessage, ...]:
    return tuple(sorted(messages, key=lambda m: m.pseudonym.key_bytes))


def create_block(prev_hash: bytes, slot: int, messages: Sequence[ReadingMessage]) -> Block:
    txs = canonical_order(messages)
    winners, average = select_miner(txs)
    root = merkle_root([tx.encode() for tx in txs])
    return Block(BlockHeader(prev_hash, root, slot, winners[0], average), txs)


def _expected_slot(chain: Chain) -> int:
    return 0 if chain.last_slot is None else chain.last_slot + 1


def _check_content(block: Block, bloom: BloomFilter | None) -> str | None:
    """Checks 2-5 of block verification; returns the first failing reason."""
    txs = block.transactions
    if not txs:
        return "empty-block"
    for tx in txs:
        if not verify_reading(tx):
            return "signature"
        if tx.slot != block.slot:
            return "tx-slot"
        if bloom is not None and not contains(bloom, tx.pseudonym):
            return "unregistered"
    keys = [tx.pseudonym.key_bytes for tx in txs]
    for a, b in zip(keys, keys[1:]):
        if a == b:
            return "duplicate-pseudonym"
        if a > b:
            return "order"
    try:
        if merkle_root([tx.encode() for tx in txs]) != block.header.merkle_root:
            return "merkle-root"
        winners, average = select_miner(txs)
    except (EncodingError, ArithmeticError):
        return "malformed"
    if average != block.header.average:
        return "average"
    if winners[0] != block.header.miner:
        return "miner"
    return None


def _missing_own(block: Block, local_messages: Iterable[ReadingMessage], own: set) -> bool:
    return any(m.pseudonym in own and m not in block.tx_set for m in local_messages)


def verify_block(
    chain: Chain,
    candidate: Block,
    local_messages: Iterable[ReadingMessage] = (),
    bloom: BloomFilter | None = None,
    mode: str = FULL,
    own_pseudonyms: Iterable[Pseudonym] = (),
    expected_slot: int | None = None,
) -> Verdict:
    """Verify a freshly published block against the local chain.

    ``expected_slot`` defaults to the slot after the chain tip; the simulator
    passes the current round instead so a rejected round may leave a gap.
    In full mode ``own_pseudonyms`` additionally make the verifier confirm its
    own submissions appear unmodified (catches a miner dropping records).
    """
    if mode not in (FULL, OWN_ONLY):
        raise ValueError(f"unknown verification mode {mode!r}")
    slot = candidate.slot
    if candidate.header.prev_hash != chain.tip_hash:
        return Verdict(False, "prev-hash", slot)
    want = _expected_slot(chain) if expected_slot is None else expected_slot
    if slot != want or (chain.last_slot is not None and slot <= chain.last_slot):
        return Verdict(False, "slot", slot)
    if mode == FULL:
        reason = _check_content(candidate, bloom)
        if reason:
            return Verdict(False, reason, slot)
    if _missing_own(candidate, local_messages, set(own_pseudonyms)):
        return Verdict(False, "missing-own-record", slot)
    return Verdict(True, None, slot)


def append_block(chain: Chain, block: Block) -> Chain:
    """Append a block that already passed :func:`verify_block`.

    Linkage and the Merkle root are re-checked; a failure here means the
    caller skipped verification and is raised as :class:`ChainError`.
    """
    if block.header.prev_hash != chain.tip_hash:
        raise ChainError(f"block for slot {block.slot} does not link to the chain tip")
    if chain.last_slot is not None and block.slot <= chain.last_slot:
        raise ChainError(f"block slot {block.slot} does not advance the chain")
    if not block.transactions or merkle_root([t.encode() for t in block.transactions]) != block.header.merkle_root:
        raise ChainError(f"block for slot {block.slot} has an inconsistent merkle root")
    return Chain(chain.group_id, chain.blocks + (block,))


def validate_chain(chain: Chain, bloom: BloomFilter | None = None) -> Verdict:
    """Re-verify every block in order.

    Slots must strictly increase; gaps are slots the group rejected.  Without
    a filter the pseudonym registration check is skipped.
    """
    if bloom is not None and bloom.group_id and chain.group_id != bloom.group_id:
        return Verdict(False, "group", None)
    prev_hash = GENESIS_HASH
    prev_slot = -1
    for i, block in enumerate(chain.blocks):
        if block.header.prev_hash != prev_hash:
            return Verdict(False, "prev-hash", block.slot, i)
        if block.slot <= prev_slot:
            return Verdict(False, "slot", block.slot, i)
        reason = _check_content(block, bloom)
        if reason:
            return Verdict(False, reason, block.slot, i)
        prev_hash = block.hash
        prev_slot = block.slot
    return ACCEPT


def block_aggregates(chain: Chain) -> dict[int, int]:
    return {b.slot: b.header.average.sum_wh for b in chain.blocks}

