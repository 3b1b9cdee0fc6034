"""End-of-cycle billing from a finalized chain and a dynamic tariff.

Per user, ``total = sum over slots of E_t * p_t`` where ``E_t`` sums the
user's pseudonym shares in slot ``t``.  Prices are integer micro-units per
watt-hour, so every figure is exact.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .chain import Chain
from .crypto_identity import Pseudonym, RegistryEntry


class TariffError(KeyError):
    pass


class RegistryGapError(LookupError):
    pass


@dataclass(frozen=True)
class TariffSchedule:
    prices: Mapping[int, int]

    def __post_init__(self):
        for slot, price in self.prices.items():
            if price < 0:
                raise ValueError(f"negative price {price} at slot {slot}")

    def price(self, slot: int) -> int:
        try:
            return self.prices[slot]
        except KeyError:
            raise TariffError(f"no price for slot {slot}") from None

    @classmethod
    def from_csv(cls, text: str) -> TariffSchedule:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["slot", "price_micro_per_wh"]:
            raise ValueError(f"tariff columns must be slot,price_micro_per_wh; got {reader.fieldnames}")
        prices: dict[int, int] = {}
        for row in reader:
            slot = int(row["slot"])
            if slot in prices:
                raise ValueError(f"duplicate tariff slot {slot}")
            prices[slot] = int(row["price_micro_per_wh"])
        return cls(prices)

    def to_csv(self) -> str:
        rows = "".join(f"{s},{p}\n" for s, p in sorted(self.prices.items()))
        return "slot,price_micro_per_wh\n" + rows


@dataclass
class Bill:
    user_id: str
    total: int = 0
    per_slot: dict[int, tuple[int, int]] = field(default_factory=dict)


def _owner_index(registry: Iterable[RegistryEntry], group_id: str) -> dict[Pseudonym, str]:
    owners: dict[Pseudonym, str] = {}
    for entry in registry:
        if entry.group_id != group_id:
            continue
        for pk in entry.pseudonyms:
            if owners.setdefault(pk, entry.user_id) != entry.user_id:
                raise RegistryGapError(f"pseudonym {pk.hex()[:16]} registered to two users")
    return owners


def compute_bills(
    chain: Chain, tariff: TariffSchedule, registry: Iterable[RegistryEntry]
) -> list[Bill]:
    registry = list(registry)
    owners = _owner_index(registry, chain.group_id)
    users = sorted({e.user_id for e in registry if e.group_id == chain.group_id})
    bills = {u: Bill(u) for u in users}
    for block in chain.blocks:
        price = tariff.price(block.slot)
        energy = dict.fromkeys(users, 0)
        for tx in block.transactions:
            try:
                energy[owners[tx.pseudonym]] += tx.share_wh
            except KeyError:
                raise RegistryGapError(
                    f"slot {block.slot}: pseudonym {tx.pseudonym.hex()[:16]} not in registry"
                ) from None
        for user, e in energy.items():
            bills[user].per_slot[block.slot] = (e, e * price)
            bills[user].total += e * price
    return [bills[u] for u in users]


def bills_to_csv(bills: Iterable[Bill]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["user_id", "slot", "energy_wh", "charge_micro"])
    energy_total = charge_total = 0
    for bill in bills:
        for slot, (energy, charge) in sorted(bill.per_slot.items()):
            writer.writerow([bill.user_id, slot, energy, charge])
            energy_total += energy
            charge_total += charge
    writer.writerow(["TOTAL", "", energy_total, charge_total])
    return out.getvalue()


def load_tariff(path: str | Path) -> TariffSchedule:
    return TariffSchedule.from_csv(Path(path).read_text())
