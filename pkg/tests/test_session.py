import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkdnfv.clock import SimClock
from qkdnfv.errors import (AliceBusy, InsufficientKeyMaterial, InvalidTransition, KeyAlreadyConsumed,
                           PathNotEstablished, UnknownKeyId)
from qkdnfv.link_model import DEFAULT_MODEL, key_bits_generated
from qkdnfv.network import compute_path
from qkdnfv.session import KeyBlock, KeyStore, Phase, QkdEndpoint, fetch_key_by_id, reserve_key, start_session

from .conftest import Rig, one_switch_topology


def connect(rig, bob):
    path = compute_path(rig.topology, rig.alice.node_id, bob, "quantum", rig.switch.busy_ports)
    rig.switch.establish_path(path, rig.clock)
    return path


def start(rig, bob, **kw):
    path = connect(rig, bob)
    return start_session(rig.alice, rig.bobs[bob], path, path.length_km, rig.clock, switch=rig.switch, **kw)


def paired_stores(blocks_bits=(256, 256)):
    alice, bob = KeyStore("A"), KeyStore("B")
    alice.link(bob)
    for i, bits in enumerate(blocks_bits):
        block = KeyBlock(bytes([i + 1]) * 16, bytes(range(i * 7, i * 7 + bits // 8)), ("A", "B"), float(i))
        alice.deposit(block)
        bob.deposit(block)
    return alice, bob


class TestStartSession:
    def test_fresh_alice_back_to_back(self, rig):
        rig.clock = SimClock(0.0)
        path = compute_path(rig.topology, "alice", "bob1", "quantum")
        rig.switch.establish_path(path, SimClock())
        s = start_session(rig.alice, rig.bobs["bob1"], path, 0.0, rig.clock, switch=rig.switch)
        assert s.phase is Phase.INITIALIZING
        assert s.init_until == 400.0

    def test_second_concurrent_start_rejected(self, rig):
        first = start(rig, "bob1")
        # Alice's only quantum port is held, so reuse the live path object
        with pytest.raises(AliceBusy):
            start_session(rig.alice, rig.bobs["bob2"], first.path, 25.0, rig.clock, switch=rig.switch)

    def test_far_bob_with_offset_clock(self, rig):
        path = compute_path(rig.topology, "alice", "bob2", "quantum")
        rig.switch.establish_path(path, SimClock())
        rig.clock = SimClock(100.0)
        s = start_session(rig.alice, rig.bobs["bob2"], path, path.length_km, rig.clock, switch=rig.switch)
        assert s.init_until == 1365.0

    def test_path_must_be_established(self, rig):
        path = compute_path(rig.topology, "alice", "bob1", "quantum")
        with pytest.raises(PathNotEstablished):
            start_session(rig.alice, rig.bobs["bob1"], path, 0.0, rig.clock, switch=rig.switch)

    def test_alice_free_again_after_stop(self, rig):
        s = start(rig, "bob1")
        s.stop(rig.clock.now)
        rig.switch.teardown_path(s.path, rig.clock)
        s2 = start(rig, "bob2")
        assert s2.phase is Phase.INITIALIZING


class TestAdvance:
    def test_one_second_of_generation_back_to_back(self):
        rig = Rig(one_switch_topology({"bob1": 0.0}))
        rig.clock = SimClock(0.0)
        path = compute_path(rig.topology, "alice", "bob1", "quantum")
        rig.switch.establish_path(path, SimClock())
        s = start_session(rig.alice, rig.bobs["bob1"], path, 0.0, rig.clock, switch=rig.switch)
        assert s.advance(400.0) == []
        blocks = s.advance(401.0)
        assert len(blocks) == 15  # floor(4000 / 256)
        assert s.remainder_bits == 160
        assert s.phase is Phase.GENERATING

    def test_before_deadline_yields_nothing(self, rig):
        s = start(rig, "bob1")
        assert s.advance(s.init_until - 1e-6) == []
        assert s.phase is Phase.INITIALIZING

    def test_same_seed_same_blocks(self):
        def run(seed):
            rig = Rig(one_switch_topology({"bob1": 3.0}))
            s = start(rig, "bob1", seed=seed)
            return [(b.key_id, b.material) for b in s.advance(s.init_until + 2.0)]

        assert run(42) == run(42)
        assert run(42) != run(43)

    def test_blocks_land_in_both_stores(self, rig):
        s = start(rig, "bob1")
        for b in s.advance(s.init_until + 1.0):
            assert rig.alice.key_store.blocks[b.key_id].material == rig.bobs["bob1"].key_store.blocks[b.key_id].material
            assert b.length_bits == 256 == 8 * len(b.material)

    def test_stop_discards_remainder(self, rig):
        s = start(rig, "bob1")
        s.advance(s.init_until + 1.0)
        s.stop(rig.clock.now)
        assert s.phase is Phase.TORN_DOWN and s.remainder_bits == 0
        with pytest.raises(InvalidTransition):
            s.advance(s.init_until + 5.0)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0, 25), st.floats(0, 2000), st.sampled_from([64, 256, 1024]))
    def test_yield_consistency(self, d, duration, block_bits):
        rig = Rig(one_switch_topology({"bob1": d}))
        s = start(rig, "bob1", block_bits=block_bits)
        s.advance(rig.clock.now + duration)
        total = key_bits_generated(DEFAULT_MODEL, d, duration)
        assert s.bits_banked + s.remainder_bits == total
        assert s.bits_banked == (total // block_bits) * block_bits
        rig.alice.key_store.check_invariants()
        assert rig.alice.key_store.available_bits == s.bits_banked


class TestReserve:
    def test_whole_block(self):
        alice, _ = paired_stores((256,))
        key = reserve_key(alice, 256)
        assert key.key_id == bytes([1]) * 16 and key.length_bits == 256
        assert alice.blocks[key.key_id].consumed
        with pytest.raises(InsufficientKeyMaterial):
            reserve_key(alice, 8)

    def test_empty_store(self):
        alice, bob = KeyStore("A"), KeyStore("B")
        alice.link(bob)
        with pytest.raises(InsufficientKeyMaterial):
            reserve_key(alice, 1)

    def test_spanning_two_blocks_leaves_child(self):
        alice, bob = paired_stores((256, 256))
        b1, b2 = alice.blocks[bytes([1]) * 16].material, alice.blocks[bytes([2]) * 16].material
        key = reserve_key(alice, 384)
        assert key.material == b1 + b2[:16]
        assert alice.available_bits == 128
        child = reserve_key(alice, 128)
        assert child.material == b2[16:]
        # both derived ids resolve at the peer with identical material
        assert fetch_key_by_id(bob, key.key_id).material == key.material
        assert fetch_key_by_id(bob, child.key_id).material == child.material
        assert bob.available_bits == 0
        alice.check_invariants()
        bob.check_invariants()

    def test_split_single_block(self):
        alice, bob = paired_stores((256,))
        head = reserve_key(alice, 64)
        assert head.length_bits == 64
        assert fetch_key_by_id(bob, head.key_id).material == head.material
        assert bob.available_bits == 192
        rest = reserve_key(alice, 192)
        assert rest.material == alice.blocks[bytes([1]) * 16].material[8:]

    def test_oldest_first(self):
        alice, _ = paired_stores((256, 256, 256))
        assert [reserve_key(alice, 256).key_id[0] for _ in range(3)] == [1, 2, 3]

    def test_byte_granularity(self):
        alice, _ = paired_stores((256,))
        with pytest.raises(ValueError):
            reserve_key(alice, 12)

    def test_multiple_peers_need_a_name(self):
        alice = KeyStore("A")
        alice.link(KeyStore("B"))
        alice.link(KeyStore("C"))
        with pytest.raises(Exception, match="name one"):
            reserve_key(alice, 8)


class TestFetch:
    def test_consume_once(self):
        alice, bob = paired_stores((256,))
        kid = bytes([1]) * 16
        assert fetch_key_by_id(bob, kid).material == alice.blocks[kid].material
        with pytest.raises(KeyAlreadyConsumed):
            fetch_key_by_id(bob, kid)

    def test_unknown(self):
        _, bob = paired_stores((256,))
        with pytest.raises(UnknownKeyId):
            fetch_key_by_id(bob, b"\xff" * 16)

    def test_reserved_key_cannot_be_reserved_again(self):
        alice, _ = paired_stores((256,))
        key = reserve_key(alice, 256)
        with pytest.raises(KeyAlreadyConsumed):
            fetch_key_by_id(alice, key.key_id)

    def test_fetched_block_skipped_by_reserve(self):
        alice, _ = paired_stores((256, 256))
        fetch_key_by_id(alice, bytes([1]) * 16)
        assert reserve_key(alice, 256).key_id == bytes([2]) * 16


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 80), min_size=1, max_size=12))
def test_reservations_pair_and_never_overlap(requests):
    alice, bob = paired_stores((256,) * 8)
    pool = b"".join(alice.blocks[bytes([i + 1]) * 16].material for i in range(8))
    handed = b""
    for nbytes in requests:
        if alice.available_bits < 8 * nbytes:
            with pytest.raises(InsufficientKeyMaterial):
                reserve_key(alice, 8 * nbytes)
            break
        key = reserve_key(alice, 8 * nbytes)
        assert key.length_bits == 8 * nbytes
        assert fetch_key_by_id(bob, key.key_id).material == key.material
        with pytest.raises(KeyAlreadyConsumed):
            fetch_key_by_id(bob, key.key_id)
        handed += key.material
        alice.check_invariants()
        bob.check_invariants()
        assert alice.available_bits == bob.available_bits
    # oldest-first consumption hands the pool out in order, without reuse
    assert handed == pool[:len(handed)]


def test_dump_format():
    alice, _ = paired_stores((256,))
    lines = alice.dump().splitlines()
    assert lines[0] == "key_id\tlength_bits\tconsumed\tpair"
    assert lines[1] == f"{'01' * 16}\t256\t0\tA:B"


def test_endpoint_roles():
    ep = QkdEndpoint("n1", "alice", KeyStore("n1"))
    assert ep.active is None
