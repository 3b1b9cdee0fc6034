import pytest

from gridchain import rng as rngmod
from gridchain.crypto_identity import generate_keypair, sign_reading
from gridchain.metering import ReadingMessage


def keypair(seed, bits=64):
    return generate_keypair(bits, rngmod.fork(seed, "test-key"), test_mode=True)


def signed(kp, share, slot):
    pk = kp.pseudonym
    return ReadingMessage(share, slot, pk, sign_reading(kp.private_key, share, slot, pk))


@pytest.fixture(scope="session")
def keys():
    return [keypair(i) for i in range(60)]


@pytest.fixture
def sign():
    return signed


def honest_chain(keys, blocks=10, per_block=5, seed=0, group_id="g0"):
    """Chain of honest blocks; block t uses keys[t % ...] rotated so pseudonyms vary."""
    from gridchain.chain import Chain, append_block, create_block

    r = rngmod.fork(seed, "honest-chain")
    chain = Chain(group_id)
    messages = {}
    for slot in range(blocks):
        chosen = r.sample(keys, per_block)
        msgs = [signed(kp, r.randint(-1000, 3000), slot) for kp in chosen]
        messages[slot] = msgs
        chain = append_block(chain, create_block(chain.tip_hash, slot, msgs))
    return chain, messages


@pytest.fixture(scope="session")
def filter_for():
    from gridchain.bloom import build_filter, size_filter

    def make(keys):
        return build_filter([k.pseudonym for k in keys], size_filter(len(keys), 0.01))

    return make


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
