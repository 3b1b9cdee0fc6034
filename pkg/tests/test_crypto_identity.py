import hashlib
import inspect
import random

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from gridchain import crypto_identity as ci
from gridchain import rng as rngmod
from gridchain.bloom import build_filter, contains, size_filter
from gridchain.crypto_identity import (
    EncodingError,
    KeyAuthority,
    KeySizeError,
    Pseudonym,
    RegistrationConflict,
    canonical_payload,
    generate_keypair,
    is_probable_prime,
    sign_digest,
    sign_reading,
    verify_digest,
    verify_reading,
    verify_signature,
)
from gridchain.metering import ReadingMessage

from conftest import keypair, signed


class TestKeyGeneration:
    def test_zero_digest_round_trip(self):
        kp = generate_keypair(64, random.Random(1), test_mode=True)
        sig = sign_digest(kp.private_key, 0)
        assert verify_digest(kp.public_key, 0, sig)

    def test_deterministic_for_seed(self):
        a = generate_keypair(64, random.Random(1), test_mode=True)
        b = generate_keypair(64, random.Random(1), test_mode=True)
        assert a == b
        assert a.pseudonym.key_bytes == b.pseudonym.key_bytes

    def test_exponents_inverse_mod_phi_by_factoring(self):
        kp = generate_keypair(64, random.Random(7), test_mode=True)
        factors = sympy.factorint(kp.n)
        assert sorted(factors.values()) == [1, 1]
        p, q = factors
        assert p != q and p.bit_length() == 32 and q.bit_length() == 32
        phi = (p - 1) * (q - 1)
        assert kp.e * kp.d % phi == 1
        assert kp.n.bit_length() == 64

    @pytest.mark.parametrize("seed", range(5))
    def test_rsa_identity_on_random_digests(self, seed):
        kp = keypair(seed)
        r = random.Random(seed)
        for _ in range(50):
            z = r.randrange(kp.n)
            assert pow(pow(z, kp.e, kp.n), kp.d, kp.n) == z

    def test_floors(self):
        with pytest.raises(KeySizeError):
            generate_keypair(63, random.Random(0), test_mode=True)
        with pytest.raises(KeySizeError):
            generate_keypair(256, random.Random(0))
        kp = generate_keypair(512, random.Random(0))
        assert kp.n.bit_length() == 512

    def test_miller_rabin_matches_trial_division(self):
        r = random.Random(3)
        for n in range(3000):
            truth = n > 1 and all(n % q for q in range(2, int(n**0.5) + 1))
            assert is_probable_prime(n, r) == truth
        # Carmichael numbers
        for n in (561, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265):
            assert not is_probable_prime(n, r)


class TestRegistration:
    def test_three_pseudonyms_land_in_filter(self):
        auth = KeyAuthority(64, test_mode=True)
        pks = auth.register_user("meter-1", 3, "g0", random.Random(0))
        assert len(set(pks)) == 3
        bloom = build_filter(auth.group_pseudonyms("g0"), size_filter(3, 0.01))
        assert all(contains(bloom, pk) for pk in pks)

    def test_duplicate_user_rejected(self):
        auth = KeyAuthority(64, test_mode=True)
        auth.register_user("meter-1", 1, "g0", random.Random(0))
        with pytest.raises(RegistrationConflict):
            auth.register_user("meter-1", 1, "g0", random.Random(1))

    def test_ten_users_four_each(self):
        auth = KeyAuthority(64, test_mode=True)
        for i in range(10):
            auth.register_user(f"m{i}", 4, "g0", rngmod.fork(0, i))
        everything = [pk for e in auth.entries() for pk in e.pseudonyms]
        assert len(everything) == 40
        assert len(set(everything)) == 40

    def test_private_keys_delivered_once(self):
        auth = KeyAuthority(64, test_mode=True)
        pks = auth.register_user("m", 2, "g0", random.Random(0))
        keys = auth.collect_keys("m", "g0")
        assert [k.pseudonym for k in keys] == pks
        with pytest.raises(KeyError):
            auth.collect_keys("m", "g0")

    def test_registry_deterministic(self):
        def build():
            auth = KeyAuthority(64, test_mode=True)
            for i in range(3):
                auth.register_user(f"m{i}", 2, "g0", rngmod.fork(9, i))
            return [(e.user_id, e.pseudonyms) for e in auth.entries()]

        assert build() == build()

    def test_no_public_operation_maps_pseudonym_to_user(self):
        # only RegistryEntry holds the user <-> pseudonym mapping
        for name, fn in inspect.getmembers(KeyAuthority, inspect.isfunction):
            if name.startswith("_"):
                continue
            params = inspect.signature(fn).parameters
            assert not any("pseudonym" in p or p == "pk" for p in params), name
        for name, fn in inspect.getmembers(ci, inspect.isfunction):
            if fn.__module__ == ci.__name__ and not name.startswith("_"):
                assert "user" not in inspect.signature(fn).return_annotation.lower(), name


class TestCanonicalPayload:
    def test_slot_injective(self, keys):
        pk = keys[0].pseudonym
        assert canonical_payload(0, 0, pk) != canonical_payload(0, 1, pk)

    def test_length(self, keys):
        pk = keys[0].pseudonym
        assert len(canonical_payload(5, 3, pk)) == 1 + 8 + 8 + 4 + len(pk.key_bytes)

    def test_negative_share_twos_complement(self, keys):
        payload = canonical_payload(-1, 0, keys[0].pseudonym)
        assert payload[1:9] == b"\xff" * 8

    def test_out_of_range(self, keys):
        with pytest.raises(EncodingError):
            canonical_payload(1 << 63, 0, keys[0].pseudonym)
        with pytest.raises(EncodingError):
            canonical_payload(0, -1, keys[0].pseudonym)

    @settings(max_examples=200, derandomize=True)
    @given(
        a=st.tuples(st.integers(-(1 << 63), (1 << 63) - 1), st.integers(0, (1 << 64) - 1), st.binary(min_size=1, max_size=12)),
        b=st.tuples(st.integers(-(1 << 63), (1 << 63) - 1), st.integers(0, (1 << 64) - 1), st.binary(min_size=1, max_size=12)),
    )
    def test_injective(self, a, b):
        pa = canonical_payload(a[0], a[1], Pseudonym(a[2]))
        pb = canonical_payload(b[0], b[1], Pseudonym(b[2]))
        assert (pa == pb) == (a == b)


class TestSignatures:
    def test_round_trip(self, keys):
        assert verify_reading(signed(keys[0], 5, 2))

    def test_wrong_key(self, keys):
        msg = signed(keys[0], 5, 2)
        assert not verify_reading(ReadingMessage(5, 2, keys[1].pseudonym, msg.signature))

    def test_single_field_mutations(self, keys):
        msg = signed(keys[0], 5, 2)
        assert not verify_signature(6, 2, msg.pseudonym, msg.signature)
        assert not verify_signature(5, 3, msg.pseudonym, msg.signature)
        assert not verify_signature(5, 2, keys[1].pseudonym, msg.signature)
        assert not verify_signature(5, 2, msg.pseudonym, msg.signature ^ 1)

    def test_random_signatures_rejected(self, keys):
        kp = keys[0]
        for seed in range(100):
            r = random.Random(seed)
            assert not verify_signature(5, 2, kp.pseudonym, r.randrange(kp.n))

    def test_every_share_bit_flip_rejected(self, keys):
        msg = signed(keys[0], 1234, 7)
        for bit in range(64):
            raw = (msg.share_wh & ((1 << 64) - 1)) ^ (1 << bit)
            flipped = raw - (1 << 64) if raw >= 1 << 63 else raw
            assert not verify_signature(flipped, 7, msg.pseudonym, msg.signature), bit

    def test_malformed_inputs_give_false(self, keys):
        msg = signed(keys[0], 1, 1)
        assert not verify_signature(1, 1, Pseudonym(b"\x00"), msg.signature)
        assert not verify_signature(1, 1, Pseudonym(msg.pseudonym.key_bytes + b"\x00"), msg.signature)
        assert not verify_signature(1 << 70, 1, msg.pseudonym, msg.signature)
        assert not verify_signature(1, 1, msg.pseudonym, -1)
        assert not verify_reading(object())

    def test_mismatched_halves_fail_at_verification(self, keys):
        sig = sign_reading(keys[0].private_key, 3, 0, keys[1].pseudonym)
        assert not verify_signature(3, 0, keys[1].pseudonym, sig)

    def test_thousand_seeded_round_trips(self, keys):
        r = random.Random(2024)
        cases = 0
        for kp in keys[:20]:
            for _ in range(50):
                share = r.randint(-(1 << 63), (1 << 63) - 1)
                slot = r.randrange(1 << 64)
                sig = sign_reading(kp.private_key, share, slot, kp.pseudonym)
                assert verify_signature(share, slot, kp.pseudonym, sig)
                cases += 1
        assert cases >= 1000

    @settings(max_examples=300, derandomize=True)
    @given(share=st.integers(-(1 << 63), (1 << 63) - 1), slot=st.integers(0, (1 << 64) - 1), which=st.integers(0, 59))
    def test_round_trip_property(self, keys, share, slot, which):
        kp = keys[which]
        assert verify_signature(share, slot, kp.pseudonym, sign_reading(kp.private_key, share, slot, kp.pseudonym))

    def test_signature_is_digest_power(self, keys):
        kp = keys[3]
        z = int.from_bytes(hashlib.sha256(canonical_payload(9, 4, kp.pseudonym)).digest(), "big") % kp.n
        assert sign_reading(kp.private_key, 9, 4, kp.pseudonym) == pow(z, kp.e, kp.n)


def test_pseudonym_hex_round_trip_and_order(keys):
    pks = [k.pseudonym for k in keys[:10]]
    assert [Pseudonym.from_hex(p.hex()) for p in pks] == pks
    assert sorted(pks) == sorted(pks, key=lambda p: p.key_bytes)
    with pytest.raises(EncodingError):
        Pseudonym.from_hex(pks[0].hex().upper() + "A")
