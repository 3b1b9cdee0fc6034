"""Exit criteria for the build; each test prints one PASS/FAIL line in the summary."""

import time
from fractions import Fraction

import pytest

from gridchain import rng as rngmod
from gridchain.adversary import GroupView, inject_adversary
from gridchain.bench import bench_auth
from gridchain.bloom import analytic_fpr, build_filter, estimate_fpr, size_filter
from gridchain.chain import Block, Chain, append_block, create_block, select_miner, validate_chain, verify_block
from gridchain.chainfile import ChainParseError, load_chain, parse_chain, save_chain, serialize_chain
from gridchain.config import AdversaryConfig, ScenarioConfig
from gridchain.crypto_identity import EncodingError, Pseudonym, random_pseudonym
from gridchain.metering import ReadingMessage
from gridchain.report import write_report
from gridchain.simulator import authenticate, run_scenario

from conftest import honest_chain, record_criterion, signed

pytestmark = pytest.mark.slow


def small_config(seed, **kw):
    base = dict(seed=seed, users_per_group=6, slots=4, pseudonyms_per_user=3, modulus_bits=64, test_mode=True, fpr_trials=0)
    base.update(kw)
    return ScenarioConfig(**base)


def test_criterion_1_bloom_fpr():
    start = time.perf_counter()
    r = rngmod.fork(1, "acceptance-fpr")
    members = [random_pseudonym(64, r) for _ in range(200)]
    params = size_filter(200, 0.01)
    bloom = build_filter(members, params)
    measured = estimate_fpr(bloom, members, 100_000, r)
    elapsed = time.perf_counter() - start
    ok = 0.004 <= measured <= 0.02 and elapsed < 10
    record_criterion(
        1, "bloom FPR", ok,
        f"theta={params.theta} k={params.k} measured={measured:.5f} "
        f"analytic={analytic_fpr(params.theta, params.k, 200):.5f} in {elapsed:.1f}s",
    )
    assert 0.004 <= measured <= 0.02
    assert elapsed < 10


def test_criterion_2_auth_scaling():
    start = time.perf_counter()
    rows = {r["group_size"]: r for r in bench_auth([10, 50, 100, 200], repetitions=1000)}
    elapsed = time.perf_counter() - start
    bloom_ratio = rows[200]["bloom_ns"] / rows[10]["bloom_ns"]
    naive_ratio = rows[200]["naive_ns"] / rows[10]["naive_ns"]
    ok = bloom_ratio <= 1.5 and naive_ratio >= 5 and elapsed < 60
    record_criterion(2, "auth scaling trend", ok, f"bloom ratio={bloom_ratio:.2f} naive ratio={naive_ratio:.2f} in {elapsed:.1f}s")
    assert bloom_ratio <= 1.5
    assert naive_ratio >= 5
    assert elapsed < 60


def test_criterion_3_conservation():
    start = time.perf_counter()
    sizes = rngmod.fork(3, "acceptance-sizes")
    failures = []
    for i in range(50):
        config = ScenarioConfig(
            seed=1000 + i,
            group_count=sizes.randint(1, 2),
            users_per_group=sizes.randint(1, 200 // 2),
            pseudonyms_per_user=sizes.randint(1, 5),
            slots=sizes.randint(1, 50),
            modulus_bits=64,
            test_mode=True,
            fpr_trials=0,
            full_verifiers=1,
        )
        report = run_scenario(config)
        bills = {b.user_id: b for b in report.bills}
        # per meter and slot: the user's shares in the block sum to the true reading
        for (gid, slot, user), value in report.ground_truth.items():
            if bills[user].per_slot[slot][0] != value:
                failures.append((i, "meter-slot", gid, slot, user))
        for rec in report.slots:
            if rec.aggregate != rec.ground_truth:
                failures.append((i, "aggregate", rec.group_id, rec.slot))
        expected = sum(
            b.header.average.sum_wh * report.tariff.price(b.slot)
            for chain in report.chains.values()
            for b in chain.blocks
        )
        if sum(b.total for b in report.bills) != expected:
            failures.append((i, "bills"))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120
    record_criterion(3, "conservation", ok, f"50 scenarios, {len(failures)} mismatches in {elapsed:.1f}s")
    assert failures == []
    assert elapsed < 120


def _brute_force(shares):
    avg = Fraction(sum(shares), len(shares))
    dist = [abs(s - avg) for s in shares]
    best = min(dist)
    return {i for i, d in enumerate(dist) if d == best}


def test_criterion_4_miner_oracle():
    start = time.perf_counter()
    r = rngmod.fork(4, "acceptance-miner")
    pool = [Pseudonym(i.to_bytes(2, "big")) for i in range(50)]
    mismatches = ties = 0
    for _ in range(10_000):
        size = r.randint(1, 50)
        spread = r.choice([3, 20, 1000])
        shares = [r.randint(-spread, spread) for _ in range(size)]
        msgs = [ReadingMessage(s, 0, pool[i], 0) for i, s in enumerate(shares)]
        winners, avg = select_miner(msgs)
        expected = _brute_force(shares)
        ties += len(expected) > 1
        if set(winners) != {pool[i] for i in expected} or avg.sum_wh != sum(shares) or avg.count != size:
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    record_criterion(4, "miner oracle", ok, f"10000 multisets, {ties} with ties, {mismatches} mismatches in {elapsed:.1f}s")
    assert mismatches == 0
    assert elapsed < 10


def test_criterion_5_tamper_evidence(keys, filter_for):
    bloom = filter_for(keys)
    chain, _ = honest_chain(keys, blocks=2, per_block=5, seed=5)
    msgs = [signed(keys[i], s, 2) for i, s in zip((2, 9, 17, 30, 44), (640, -75, 1310, 0, 212))]
    block = create_block(chain.tip_hash, 2, msgs)
    assert verify_block(chain, block, bloom=bloom)
    extended = append_block(chain, block)

    data = block.encode()
    bin_misses = 0
    for bit in range(len(data) * 8):
        mutated = bytearray(data)
        mutated[bit // 8] ^= 1 << (bit % 8)
        try:
            candidate = Block.decode(bytes(mutated))
        except (EncodingError, ValueError):
            continue
        if verify_block(chain, candidate, bloom=bloom):
            bin_misses += 1
        if validate_chain(Chain("g0", chain.blocks + (candidate,)), bloom):
            bin_misses += 1

    text = serialize_chain(extended)
    head = text.index("block slot=2")
    text_misses = 0
    for bit in range((len(text) - head) * 8):
        pos = head + bit // 8
        flipped = chr(ord(text[pos]) ^ (1 << (bit % 8)))
        try:
            tampered = parse_chain(text[:pos] + flipped + text[pos + 1 :])
        except (ChainParseError, ValueError):
            continue
        if validate_chain(tampered, bloom):
            text_misses += 1
    ok = bin_misses == 0 and text_misses == 0
    record_criterion(
        5, "tamper evidence", ok,
        f"{len(data) * 8} binary and {(len(text) - head) * 8} text bit flips, misses={bin_misses + text_misses}",
    )
    assert bin_misses == 0
    assert text_misses == 0


def test_criterion_6_adversary_detection(keys):
    registered = [k.pseudonym for k in keys[:20]]
    bloom = build_filter(registered, size_filter(200, 0.01))
    view = GroupView("g0", registered, {}, 64, True)

    forged_ok = 0
    for seed in range(100):
        attack = inject_adversary("forge_signature", view, 5, rngmod.fork(seed, "acc-forge"))
        accepted, _ = authenticate(attack.messages, 5, bloom)
        forged_ok += not accepted

    tamper_ok = replay_ok = 0
    for seed in range(20):
        report = run_scenario(small_config(200 + seed, adversaries=(AdversaryConfig("tamper_block", (seed % 4,)),)))
        events = [e for e in report.events if e.kind == "tamper_block"]
        tamper_ok += len(events) == 1 and events[0].detected and report.slots[seed % 4].aggregate is None
    for seed in range(20):
        report = run_scenario(small_config(300 + seed, adversaries=(AdversaryConfig("replay_message", (1 + seed % 3,), 2),)))
        events = [e for e in report.events if e.kind == "replay_message"]
        replay_ok += len(events) == 2 and all(e.outcome == "rejected:stale-slot" for e in events)

    # the 200-capacity filter holds 200 registered pseudonyms for the FPR leg
    members = registered + [random_pseudonym(64, rngmod.fork(6, "fill", i)) for i in range(180)]
    full = build_filter(members, size_filter(200, 0.01))
    view = GroupView("g0", members, {}, 64, True)
    trials, slipped = 100_000, 0
    attack = inject_adversary("unregistered_pseudonym", view, 0, rngmod.fork(6, "acc-unreg"), count=trials)
    accepted, rejected = authenticate(attack.messages, 0, full)
    slipped = len(accepted)
    rate = slipped / trials
    assert all(reason == "unregistered" for _, reason in rejected)

    ok = forged_ok == 100 and tamper_ok == 20 and replay_ok == 20 and rate <= 0.02
    record_criterion(
        6, "adversary detection", ok,
        f"forged {forged_ok}/100, tampered {tamper_ok}/20, replayed {replay_ok}/20, unregistered acceptance={rate:.5f}",
    )
    assert forged_ok == 100
    assert tamper_ok == 20
    assert replay_ok == 20
    assert rate <= 0.02


def test_criterion_7_determinism(tmp_path, keys):
    config = ScenarioConfig(
        seed=77, group_count=2, users_per_group=12, slots=6, modulus_bits=64, test_mode=True, fpr_trials=3000,
        adversaries=(
            AdversaryConfig("forge_signature", (1,), 2),
            AdversaryConfig("unregistered_pseudonym", (2,), 3),
            AdversaryConfig("replay_message", (3,)),
            AdversaryConfig("tamper_block", (4,), group=1),
        ),
    )
    write_report(run_scenario(config), tmp_path / "a")
    write_report(run_scenario(config), tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    differing = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]

    roundtrip_ok = True
    for gid in ("g0", "g1"):
        path = tmp_path / "a" / f"chain-{gid}.txt"
        chain = load_chain(path)
        copy = tmp_path / f"copy-{gid}.txt"
        save_chain(chain, copy)
        roundtrip_ok &= copy.read_bytes() == path.read_bytes() and bool(validate_chain(chain))
    ok = not differing and roundtrip_ok and len(files) > 10
    record_criterion(7, "determinism", ok, f"{len(files)} output files compared, differing={differing}, chain round-trip={roundtrip_ok}")
    assert differing == []
    assert roundtrip_ok


def test_criterion_8_billing_oracle():
    mismatches = 0
    for seed in range(20):
        report = run_scenario(small_config(800 + seed, users_per_group=8, slots=10, pseudonyms_per_user=1 + seed % 4))
        oracle = {}
        for (_, slot, user), value in report.ground_truth.items():
            oracle[user] = oracle.get(user, 0) + value * report.tariff.price(slot)
        mismatches += {b.user_id: b.total for b in report.bills} != oracle
    record_criterion(8, "billing oracle", mismatches == 0, f"20 scenarios, {mismatches} mismatching")
    assert mismatches == 0
