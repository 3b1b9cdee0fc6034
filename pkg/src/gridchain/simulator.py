"""Deterministic slot-by-slot simulation of one or more meter groups.

Per slot and group: meters read and split, everything is broadcast on a
lossless synchronous channel, each message is authenticated (slot binding,
signature, bloom validity, one message per pseudonym), the closest-to-average
pseudonym builds the block, the group verifies it, and the block is appended
or rejected.  Billing runs once over the final chains.

Message authentication is a pure function of the broadcast, the slot and the
group filter, all identical at every node, so it is computed once per group.
Block verification is run by every meter in own-records mode plus the first
``full_verifiers`` meters in full mode; a single objection rejects the block.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from . import rng as rngmod
from .adversary import TAMPER, Attack, GroupView, inject_adversary
from .billing import Bill, RegistryGapError, TariffSchedule, compute_bills
from .bloom import BloomFilter, analytic_fpr, build_filter, contains, estimate_fpr, size_filter
from .chain import FULL, OWN_ONLY, Chain, append_block, create_block, verify_block
from .config import ScenarioConfig
from .crypto_identity import KeyAuthority, Pseudonym, RegistryEntry, verify_reading
from .metering import Meter, ReadingMessage, aggregate, make_messages

log = logging.getLogger(__name__)


class ScenarioHalted(RuntimeError):
    def __init__(self, group_id: str, slot: int, reason: str):
        super().__init__(f"group {group_id} halted at slot {slot}: {reason}")
        self.group_id, self.slot, self.reason = group_id, slot, reason


@dataclass
class SlotRecord:
    group_id: str
    slot: int
    sent: int
    accepted: int
    rejected: int
    reasons: dict[str, int]
    block: str  # accepted | rejected | none
    block_reason: str
    miner: str
    aggregate: int | None
    ground_truth: int


@dataclass
class AdversaryEvent:
    group_id: str
    slot: int
    kind: str
    outcome: str  # "rejected:<reason>" or "accepted"

    @property
    def detected(self) -> bool:
        return self.outcome.startswith("rejected")


@dataclass
class GroupState:
    group_id: str
    meters: list[Meter]
    bloom: BloomFilter
    chain: Chain
    owner: dict[Pseudonym, str]
    history: dict[int, list[ReadingMessage]] = field(default_factory=dict)


@dataclass
class RunReport:
    config: ScenarioConfig
    slots: list[SlotRecord] = field(default_factory=list)
    events: list[AdversaryEvent] = field(default_factory=list)
    fpr: dict[str, float] = field(default_factory=dict)
    fpr_analytic: dict[str, float] = field(default_factory=dict)
    chains: dict[str, Chain] = field(default_factory=dict)
    blooms: dict[str, BloomFilter] = field(default_factory=dict)
    registry: list[RegistryEntry] = field(default_factory=list)
    ground_truth: dict[tuple[str, int, str], int] = field(default_factory=dict)
    tariff: TariffSchedule | None = None
    bills: list[Bill] = field(default_factory=list)
    billing_error: str = ""
    miner_counts: dict[str, Counter] = field(default_factory=dict)
    verifier_disagreements: int = 0
    halted: ScenarioHalted | None = None

    @property
    def blocks_accepted(self) -> int:
        return sum(r.block == "accepted" for r in self.slots)

    @property
    def blocks_rejected(self) -> int:
        return sum(r.block == "rejected" for r in self.slots)


def authenticate(
    messages: list[ReadingMessage], slot: int, bloom: BloomFilter
) -> tuple[list[ReadingMessage], list[tuple[ReadingMessage, str]]]:
    """Split a slot's broadcast into accepted messages and (message, reason) rejections."""
    accepted: list[ReadingMessage] = []
    rejected: list[tuple[ReadingMessage, str]] = []
    seen: set[Pseudonym] = set()
    for msg in messages:
        if msg.slot != slot:
            reason = "stale-slot"
        elif not verify_reading(msg):
            reason = "signature"
        elif not contains(bloom, msg.pseudonym):
            reason = "unregistered"
        elif msg.pseudonym in seen:
            reason = "duplicate-pseudonym"
        else:
            seen.add(msg.pseudonym)
            accepted.append(msg)
            continue
        rejected.append((msg, reason))
    return accepted, rejected


def _setup_group(config: ScenarioConfig, g: int, authority: KeyAuthority, reading) -> GroupState:
    group_id = f"g{g}"
    meters = []
    for i in range(config.users_per_group):
        user_id = f"{group_id}-m{i:03d}"
        authority.register_user(
            user_id, config.pseudonyms_per_user, group_id, rngmod.fork(config.seed, "keys", group_id, user_id)
        )
        keys = authority.collect_keys(user_id, group_id)
        meters.append(Meter(user_id, keys, lambda slot, u=user_id: reading(group_id, u, slot)))
    members = authority.group_pseudonyms(group_id)
    params = size_filter(max(1, len(members)), config.target_fpr)
    bloom = build_filter(members, params, group_id=group_id)
    owner = {pk: m.user_id for m in meters for pk in m.pseudonyms}
    return GroupState(group_id, meters, bloom, Chain(group_id), owner)


def _run_slot(config: ScenarioConfig, gi: int, state: GroupState, slot: int, report: RunReport) -> None:
    gid = state.group_id
    honest: list[ReadingMessage] = []
    truth = 0
    for meter in state.meters:
        value = meter.read(slot).value_wh
        report.ground_truth[(gid, slot, meter.user_id)] = value
        truth += value
        honest += make_messages(meter, slot, rngmod.fork(config.seed, "meter", gid, meter.user_id, slot))

    view = GroupView(gid, list(state.owner), state.history, config.modulus_bits, config.test_mode)
    attacks: list[Attack] = []
    for ai, adv in enumerate(config.adversaries):
        if adv.group == gi and slot in adv.slots:
            attacks.append(
                inject_adversary(adv.kind, view, slot, rngmod.fork(config.seed, "adversary", ai, gid, slot), adv.count)
            )
    injected = {id(m): a.kind for a in attacks for m in a.messages}
    broadcast = honest + [m for a in attacks for m in a.messages]

    accepted, rejected = authenticate(broadcast, slot, state.bloom)
    state.history[slot] = accepted
    accepted_ids = {id(m) for m in accepted}
    for msg in broadcast:
        if id(msg) in injected and id(msg) in accepted_ids:
            report.events.append(AdversaryEvent(gid, slot, injected[id(msg)], "accepted"))
    for msg, reason in rejected:
        if id(msg) in injected:
            report.events.append(AdversaryEvent(gid, slot, injected[id(msg)], f"rejected:{reason}"))

    record = SlotRecord(
        gid, slot, len(broadcast), len(accepted), len(rejected),
        dict(sorted(Counter(r for _, r in rejected).items())),
        "none", "", "", None, truth,
    )
    report.slots.append(record)
    if not accepted:
        return

    block = create_block(state.chain.tip_hash, slot, accepted)
    tampers = [a for a in attacks if a.kind == TAMPER]
    for attack in tampers:
        block = attack.tamper(block)

    objection = None
    full_verdicts = []
    for idx, meter in enumerate(state.meters):
        mode = FULL if idx < config.full_verifiers else OWN_ONLY
        verdict = verify_block(
            state.chain, block, meter.sent.get(slot, ()), state.bloom, mode, meter.pseudonyms, expected_slot=slot
        )
        if mode == FULL:
            full_verdicts.append(verdict.accepted)
        if not verdict and objection is None:
            objection = verdict.reason
    if len(set(full_verdicts)) > 1:
        report.verifier_disagreements += 1

    record.miner = block.header.miner.hex()
    if objection is None:
        state.chain = append_block(state.chain, block)
        record.block = "accepted"
        record.aggregate = aggregate(block.transactions)
        report.miner_counts[gid][state.owner.get(block.header.miner, "?")] += 1
    else:
        record.block = "rejected"
        record.block_reason = objection
    for attack in tampers:
        outcome = f"rejected:{objection}" if objection else "accepted"
        report.events.append(AdversaryEvent(gid, slot, TAMPER, outcome))
    if objection is not None and config.on_reject == "halt":
        raise ScenarioHalted(gid, slot, objection)


def run_scenario(config: ScenarioConfig) -> RunReport:
    config.validate()
    report = RunReport(config)
    reading = config.reading()
    authority = KeyAuthority(config.modulus_bits, test_mode=config.test_mode)
    groups = [_setup_group(config, g, authority, reading) for g in range(config.group_count)]
    report.registry = authority.entries()
    for gi, state in enumerate(groups):
        gid = state.group_id
        report.blooms[gid] = state.bloom
        report.miner_counts[gid] = Counter()
        members = list(state.owner)
        if config.fpr_trials:
            report.fpr[gid] = estimate_fpr(
                state.bloom, members, config.fpr_trials, rngmod.fork(config.seed, "fpr", gid), config.modulus_bits
            )
        report.fpr_analytic[gid] = analytic_fpr(state.bloom.theta, state.bloom.k, len(members))

    try:
        for gi, state in enumerate(groups):
            for slot in range(config.slots):
                try:
                    _run_slot(config, gi, state, slot, report)
                finally:
                    report.chains[state.group_id] = state.chain
    except ScenarioHalted as halt:
        log.warning("%s", halt)
        report.halted = halt
    for state in groups:
        report.chains[state.group_id] = state.chain

    report.tariff = config.tariff_schedule()
    try:
        for state in groups:
            report.bills += compute_bills(state.chain, report.tariff, report.registry)
    except (RegistryGapError, KeyError) as exc:
        report.billing_error = str(exc)
        report.bills = []
    return report
