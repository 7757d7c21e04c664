import dataclasses
import itertools
from importlib import resources

import pytest

from dscot.crypto import ZERO_DIGEST, KeyPair, keccak256
from dscot.gas import DEFAULT_SCHEDULE, GasSchedule, GasTrace, meter
from dscot.ledger import Ledger, LedgerError, Transaction, ValidatorSet
from dscot.registry import NOT_ADMIN, Revert

OWNER = KeyPair.from_seed(21, "owner")
OTHER = KeyPair.from_seed(21, "other")
FOG = KeyPair.from_seed(21, "fog").address
DEV = KeyPair.from_seed(21, "dev").address
USER = KeyPair.from_seed(21, "user")


def send(ledger, key, op, *args, clock=None):
    tx = Transaction.create(key, op, args, ledger.last_nonce(key.address) + 1)
    h = ledger.submit(tx)
    result = ledger.run_round(clock=clock)
    assert result.committed
    return ledger.get_receipt(h)


@pytest.fixture
def ledger():
    led = Ledger(validators=4)
    send(led, OWNER, "construct")
    return led


def test_genesis():
    led = Ledger()
    g = led.get_block(0)
    assert g.number == 0 and g.parent_hash == ZERO_DIGEST and g.tx_hashes == ()
    assert g.state_root == keccak256(b"null")
    assert led.snapshot().admins == []


def test_submit_rejects_tampered_and_replayed():
    led = Ledger()
    tx = Transaction.create(OWNER, "construct", (), 1)
    forged = dataclasses.replace(tx, sender=OTHER.address)
    with pytest.raises(LedgerError, match="signature"):
        led.submit(forged)
    other_key = dataclasses.replace(tx, public_key=OTHER.public_key)
    with pytest.raises(LedgerError, match="signature"):
        led.submit(other_key)
    led.submit(tx)
    with pytest.raises(LedgerError, match="nonce"):
        led.submit(tx)
    with pytest.raises(LedgerError, match="nonce"):
        led.submit(Transaction.create(OWNER, "approve", (OTHER.address,), 3))
    assert len(led.pending) == 1


def test_unknown_operation():
    with pytest.raises(ValueError):
        Transaction.create(OWNER, "selfdestruct", (), 1)


def test_construct_twice_and_before_deploy():
    led = Ledger()
    r = send(led, OWNER, "approve", OTHER.address)
    assert r.status == "reverted" and r.reason == "Registry not deployed"
    send(led, OWNER, "construct")
    r = send(led, OTHER, "construct")
    assert r.reason == "Registry already deployed"
    assert led.creator == OWNER.address


def test_reverted_receipt_is_on_chain_and_leaves_state(ledger):
    before = ledger.snapshot().dumps()
    r = send(ledger, OTHER, "approve", OTHER.address)
    assert r.status == "reverted" and r.reason == NOT_ADMIN and r.events == ()
    assert r.gas_used > 0
    assert r.tx_hash in ledger.head.tx_hashes
    assert ledger.snapshot().dumps() == before


def test_blocks_chain_and_rotate(ledger):
    for i in range(5):
        send(ledger, OWNER, "device_fog_mapping", FOG, KeyPair.from_seed(3, str(i)).address)
    blocks = ledger.blocks
    assert [b.number for b in blocks] == list(range(len(blocks)))
    for prev, cur in zip(blocks, blocks[1:]):
        assert cur.parent_hash == prev.hash
        assert cur.proposer == ledger.validator_set.proposer(cur.number, 0)
    assert len({b.proposer for b in blocks[1:]}) == 4
    assert ledger.verify_chain()


def test_verify_chain_detects_tamper(ledger):
    send(ledger, OWNER, "approve", OTHER.address)
    ledger.blocks[1] = dataclasses.replace(ledger.blocks[1], state_root=ZERO_DIGEST)
    assert not ledger.verify_chain()


@pytest.mark.parametrize("n", [1, 4, 7, 10])
def test_quorum_sizes(n):
    vs = ValidatorSet.of_size(n)
    assert vs.n >= 3 * vs.f + 1 and vs.quorum == 2 * vs.f + 1


def test_fault_masks_n4():
    for size in range(5):
        for mask in itertools.combinations(range(4), size):
            led = Ledger(4)
            led.submit(Transaction.create(OWNER, "construct", (), 1))
            result = led.run_round(faults=mask)
            assert result.committed == (size <= 1), mask
            if result.committed:
                assert result.block.proposer not in mask
            else:
                assert len(led.pending) == 1 and led.height == 0


def test_faulty_proposer_triggers_round_change(ledger):
    height = ledger.height + 1
    proposer = ledger.validator_set.proposer(height, 0)
    tx = Transaction.create(OWNER, "approve", (OTHER.address,), 2)
    ledger.submit(tx)
    result = ledger.run_round(faults=[proposer])
    assert result.committed and result.block.round == 1 and result.failed_rounds == 1
    assert not result.rounds[0].proposed


def test_pending_survives_failed_heights(ledger):
    ledger.submit(Transaction.create(OWNER, "approve", (OTHER.address,), 2))
    assert not ledger.run_round(faults=[0, 1]).committed
    assert ledger.run_round().committed
    assert ledger.pending == []
    assert OTHER.address in ledger.snapshot().admins


def test_set_faults_validates():
    with pytest.raises(LedgerError):
        Ledger(4).set_faults([9])


def test_timestamps_monotonic(ledger):
    send(ledger, OWNER, "approve", OTHER.address, clock=50)
    send(ledger, OWNER, "approve", USER.address, clock=10)
    ts = [b.timestamp for b in ledger.blocks]
    assert ts == sorted(ts)


def test_calls_are_free(ledger):
    send(ledger, OWNER, "approve", USER.address)
    for method in ("no_of_admins", "admin_add", "tokens_issued"):
        result = ledger.call(OWNER.address, method)
        assert result.fee == 0 and result.execution_cost > 0
    assert ledger.call(OWNER.address, "no_of_admins").value == 2
    with pytest.raises(Revert):
        ledger.call(OTHER.address, "no_of_admins")
    with pytest.raises(LedgerError):
        ledger.call(OWNER.address, "approve")


def test_trace_token(ledger):
    send(ledger, OWNER, "device_fog_mapping", FOG, DEV)
    send(ledger, OWNER, "user_device_mapping", USER.address, DEV, FOG)
    r1 = send(ledger, USER, "mint_nft", DEV, FOG, clock=100)
    r2 = send(ledger, USER, "mint_nft", DEV, FOG, clock=200)
    tid = r1.events[1]["_tokenId"]
    trace = ledger.trace_token(tid)
    assert [e.name for _, e in trace] == ["Authenticated", "TokenCreated"]
    assert all(n == r1.block_number for n, _ in trace)
    assert ledger.trace_token(r2.events[1]["_tokenId"])[0][0] == r2.block_number
    assert ledger.trace_token(keccak256(b"unknown")) == []


def test_receipt_lookup_errors(ledger):
    with pytest.raises(LedgerError):
        ledger.get_receipt(ZERO_DIGEST)
    with pytest.raises(LedgerError):
        ledger.get_block(99)


def test_determinism():
    def build():
        led = Ledger()
        send(led, OWNER, "construct")
        send(led, OWNER, "device_fog_mapping", FOG, DEV)
        send(led, OWNER, "user_device_mapping", USER.address, DEV, FOG)
        send(led, USER, "mint_nft", DEV, FOG, clock=7)
        return led.export_chain()

    assert build() == build()


def test_meter_is_monotone_in_every_counter():
    base = GasTrace()
    base_cost = meter(base)
    for bump in (
        lambda t: t.read(),
        lambda t: t.write(fresh=True),
        lambda t: t.write(fresh=False),
        lambda t: t.loop(),
        lambda t: t.hash(64),
        lambda t: t.log(2, 32),
    ):
        t = GasTrace()
        bump(t)
        assert meter(t) > base_cost


def test_schedule_parse_and_shipped_default():
    text = resources.files("dscot").joinpath("data", "default.conf").read_text()
    assert GasSchedule.parse(text) == DEFAULT_SCHEDULE
    assert GasSchedule.parse(DEFAULT_SCHEDULE.dumps()) == DEFAULT_SCHEDULE
    with pytest.raises(ValueError):
        GasSchedule.parse("sload = -1\n")
    with pytest.raises(ValueError):
        GasSchedule.parse("no_such_key = 1\n")


def test_approve_cost_matches_calibration(ledger):
    assert send(ledger, OWNER, "approve", OTHER.address).gas_used == 61613
