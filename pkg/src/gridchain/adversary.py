"""Scripted attacks against a group.

Message attacks return extra messages to broadcast in the slot; the
``tamper_block`` attack returns a function that rewrites the miner's block.
"""

from __future__ import annotations

import random
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace

from .chain import Block, BlockHeader, canonical_order, merkle_root, select_miner
from .crypto_identity import Pseudonym, generate_keypair, sign_reading
from .metering import ReadingMessage

FORGE = "forge_signature"
UNREGISTERED = "unregistered_pseudonym"
TAMPER = "tamper_block"
REPLAY = "replay_message"


@dataclass
class GroupView:
    """What an attacker inside or next to a group can see."""

    group_id: str
    registered: Sequence[Pseudonym]
    history: dict[int, list[ReadingMessage]]
    modulus_bits: int
    test_mode: bool = False


@dataclass
class Attack:
    kind: str
    messages: list[ReadingMessage]
    tamper: Callable[[Block], Block] | None = None


def forge_signature(view: GroupView, slot: int, rng: random.Random) -> ReadingMessage:
    """Claim a registered victim's pseudonym with a guessed signature."""
    victim = rng.choice(list(view.registered))
    n, _ = victim.public_numbers
    return ReadingMessage(rng.randint(-5000, 5000), slot, victim, rng.randrange(n))


def unregistered_pseudonym(view: GroupView, slot: int, rng: random.Random) -> ReadingMessage:
    """A correctly signed message under a key the authority never issued."""
    kp = generate_keypair(view.modulus_bits, rng, test_mode=view.test_mode)
    share = rng.randint(-5000, 5000)
    return ReadingMessage(share, slot, kp.pseudonym, sign_reading(kp.private_key, share, slot, kp.pseudonym))


def replay_message(view: GroupView, slot: int, rng: random.Random) -> ReadingMessage | None:
    earlier = [t for t in view.history if t < slot and view.history[t]]
    if not earlier:
        return None
    return rng.choice(view.history[rng.choice(earlier)])


def tamper_block(block: Block, rng: random.Random) -> Block:
    """Shift one share after signing and rebuild a self-consistent header."""
    txs = list(block.transactions)
    i = rng.randrange(len(txs))
    delta = rng.choice([-1, 1]) * rng.randint(1, 1000)
    txs[i] = replace(txs[i], share_wh=txs[i].share_wh + delta)
    txs = canonical_order(txs)
    winners, average = select_miner(txs)
    header = BlockHeader(
        block.header.prev_hash,
        merkle_root([t.encode() for t in txs]),
        block.slot,
        winners[0],
        average,
    )
    return Block(header, txs)


def inject_adversary(kind: str, view: GroupView, slot: int, rng: random.Random, count: int = 1) -> Attack:
    if kind == FORGE:
        return Attack(kind, [forge_signature(view, slot, rng) for _ in range(count)])
    if kind == UNREGISTERED:
        return Attack(kind, [unregistered_pseudonym(view, slot, rng) for _ in range(count)])
    if kind == REPLAY:
        msgs = [replay_message(view, slot, rng) for _ in range(count)]
        return Attack(kind, [m for m in msgs if m is not None])
    if kind == TAMPER:
        return Attack(kind, [], tamper=lambda block: tamper_block(block, rng))
    raise ValueError(f"unknown adversary kind {kind!r}")
