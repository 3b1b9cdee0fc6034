"""Flat text format for chains, bloom snapshots and the pseudonym registry.

Chain files look like::

    chain group=g0 blocks=2
    block slot=0 prev=<64 hex> root=<64 hex> miner=<hex> sum=<int> count=<int>
    tx share=<int> slot=<int> pk=<hex> sig=<hex>
    ...

Parsing is strict (fixed field order, lowercase hex, canonical integers) so
that parse followed by serialize reproduces the input byte for byte.
"""

from __future__ import annotations

import re
from pathlib import Path

from .bloom import BloomFilter
from .chain import Block, BlockHeader, Chain, SlotAverage, Verdict, validate_chain
from .crypto_identity import Pseudonym, RegistryEntry
from .metering import ReadingMessage

_INT = r"(-?(?:0|[1-9][0-9]*))"
_UINT = r"(0|[1-9][0-9]*)"
_HEX = r"([0-9a-f]+)"
_HEX32 = r"([0-9a-f]{64})"
_SIG = r"(0|[1-9a-f][0-9a-f]*)"

_CHAIN_RE = re.compile(rf"chain group=(\S+) blocks={_UINT}")
_BLOCK_RE = re.compile(
    rf"block slot={_UINT} prev={_HEX32} root={_HEX32} miner={_HEX} sum={_INT} count={_UINT}"
)
_TX_RE = re.compile(rf"tx share={_INT} slot={_UINT} pk={_HEX} sig={_SIG}")


class ChainParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ChainRejected(ValueError):
    def __init__(self, verdict: Verdict):
        super().__init__(f"chain rejected at slot {verdict.slot}: {verdict.reason}")
        self.verdict = verdict


def _even_hex(text: str, line: int) -> bytes:
    if len(text) % 2:
        raise ChainParseError(line, "odd-length hex")
    return bytes.fromhex(text)


def serialize_chain(chain: Chain) -> str:
    lines = [f"chain group={chain.group_id} blocks={len(chain.blocks)}"]
    for block in chain.blocks:
        h = block.header
        lines.append(
            f"block slot={h.slot} prev={h.prev_hash.hex()} root={h.merkle_root.hex()} "
            f"miner={h.miner.hex()} sum={h.average.sum_wh} count={h.average.count}"
        )
        for tx in block.transactions:
            lines.append(
                f"tx share={tx.share_wh} slot={tx.slot} pk={tx.pseudonym.hex()} "
                f"sig={tx.signature:x}"
            )
    return "\n".join(lines) + "\n"


def parse_chain(text: str) -> Chain:
    if not text:
        raise ChainParseError(1, "empty chain file")
    if not text.endswith("\n"):
        raise ChainParseError(text.count("\n") + 1, "missing final newline")
    lines = text[:-1].split("\n")
    m = _CHAIN_RE.fullmatch(lines[0])
    if not m:
        raise ChainParseError(1, "expected 'chain group=<id> blocks=<n>'")
    group_id, declared = m.group(1), int(m.group(2))

    blocks: list[Block] = []
    header: BlockHeader | None = None
    txs: list[ReadingMessage] = []

    def flush() -> None:
        if header is not None:
            blocks.append(Block(header, tuple(txs)))

    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("block "):
            flush()
            m = _BLOCK_RE.fullmatch(line)
            if not m:
                raise ChainParseError(lineno, "malformed block line")
            slot, prev, root, miner, total, count = m.groups()
            header = BlockHeader(
                bytes.fromhex(prev),
                bytes.fromhex(root),
                int(slot),
                Pseudonym(_even_hex(miner, lineno)),
                SlotAverage(int(total), int(count)),
            )
            txs = []
        elif line.startswith("tx "):
            if header is None:
                raise ChainParseError(lineno, "transaction before any block")
            m = _TX_RE.fullmatch(line)
            if not m:
                raise ChainParseError(lineno, "malformed tx line")
            share, slot, pk, sig = m.groups()
            txs.append(ReadingMessage(int(share), int(slot), Pseudonym(_even_hex(pk, lineno)), int(sig, 16)))
        else:
            raise ChainParseError(lineno, f"unexpected line {line[:20]!r}")
    flush()
    if len(blocks) != declared:
        raise ChainParseError(1, f"header declares {declared} blocks, found {len(blocks)}")
    return Chain(group_id, tuple(blocks))


def save_chain(chain: Chain, path: str | Path) -> None:
    Path(path).write_bytes(serialize_chain(chain).encode())


def load_chain(path: str | Path, bloom: BloomFilter | None = None) -> Chain:
    """Parse and fully re-validate a chain file."""
    chain = parse_chain(Path(path).read_bytes().decode())
    verdict = validate_chain(chain, bloom)
    if not verdict:
        raise ChainRejected(verdict)
    return chain


def save_bloom(bloom: BloomFilter, path: str | Path) -> None:
    Path(path).write_bytes(bloom.serialize().encode())


def load_bloom(path: str | Path, group_id: str = "") -> BloomFilter:
    return BloomFilter.parse(Path(path).read_bytes().decode(), group_id=group_id)


# registry file: one line per pseudonym, "pseudonym user=<id> group=<id> pk=<hex>"
_REG_RE = re.compile(rf"pseudonym user=(\S+) group=(\S+) pk={_HEX}")


def serialize_registry(entries: list[RegistryEntry]) -> str:
    return "".join(
        f"pseudonym user={e.user_id} group={e.group_id} pk={pk.hex()}\n"
        for e in entries
        for pk in e.pseudonyms
    )


def parse_registry(text: str) -> list[RegistryEntry]:
    entries: dict[tuple[str, str], RegistryEntry] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        m = _REG_RE.fullmatch(line)
        if not m:
            raise ChainParseError(lineno, "malformed registry line")
        user, group, pk = m.groups()
        entry = entries.setdefault((group, user), RegistryEntry(user, group))
        entry.pseudonyms.append(Pseudonym(_even_hex(pk, lineno)))
    return list(entries.values())
