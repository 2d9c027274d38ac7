"""QKD key-generation sessions and the paired key stores they fill.

The quantum channel is emulated: once a session finishes initializing, key
bits accrue at the link model's secret key rate and are cut into fixed-size
blocks of seeded pseudorandom material. Each block is written to both the
Alice store and the Bob store under the same 16-byte key id.
"""
from __future__ import annotations

import enum
import hashlib
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import link_model
from .errors import (AliceBusy, InsufficientKeyMaterial, InvalidTransition, KeyAlreadyConsumed,
                     KeyStoreError, PathNotEstablished, UnknownKeyId)

DEFAULT_BLOCK_BITS = 256
KEY_ID_BYTES = 16


def derive_key_id(parent: bytes, label: str) -> bytes:
    return hashlib.sha256(parent + b"/" + label.encode()).digest()[:KEY_ID_BYTES]


@dataclass
class KeyBlock:
    key_id: bytes
    material: bytes
    pair: tuple[str, str]
    created_at: float
    consumed: bool = False
    # set once a cipher has used a handed-out block
    used: bool = field(default=False, compare=False)

    @property
    def length_bits(self) -> int:
        return 8 * len(self.material)

    @property
    def hex_id(self) -> str:
        return self.key_id.hex()


class KeyStore:
    """Key server of one endpoint.

    Blocks are queued per peer, oldest first. Access is serialized by a lock so
    the store can be shared with socket handler threads.
    """

    def __init__(self, owner: str):
        self.owner = owner
        self.blocks: dict[bytes, KeyBlock] = {}
        self.peers: dict[str, KeyStore] = {}
        self._queues: dict[str, deque[bytes]] = {}
        self._available = 0
        self._lock = threading.RLock()

    def __repr__(self):
        return f"KeyStore({self.owner!r}, blocks={len(self.blocks)}, available_bits={self._available})"

    @property
    def available_bits(self) -> int:
        return self._available

    def available_for(self, peer: str) -> int:
        with self._lock:
            return sum(self.blocks[k].length_bits for k in self._queue(peer)
                       if not self.blocks[k].consumed)

    def link(self, other: "KeyStore") -> None:
        self.peers[other.owner] = other
        other.peers[self.owner] = self

    def peer_of(self, block: KeyBlock) -> str:
        alice, bob = block.pair
        return bob if self.owner == alice else alice

    def _queue(self, peer: str) -> deque:
        return self._queues.setdefault(peer, deque())

    def deposit(self, block: KeyBlock, *, at: Optional[int] = None, queued: bool = True) -> KeyBlock:
        """Store a copy of ``block``; queue it last, at index ``at``, or not at all."""
        with self._lock:
            if block.key_id in self.blocks:
                raise KeyStoreError(f"duplicate key id {block.hex_id} at {self.owner}")
            block = replace(block, consumed=False, used=False)
            self.blocks[block.key_id] = block
            self._available += block.length_bits
            if queued:
                q = self._queue(self.peer_of(block))
                q.append(block.key_id) if at is None else q.insert(at, block.key_id)
            return block

    def _consume(self, block: KeyBlock) -> None:
        block.consumed = True
        self._available -= block.length_bits

    def _handout(self, block: KeyBlock) -> KeyBlock:
        return replace(block, consumed=True, used=False)

    def fetch(self, key_id: bytes) -> KeyBlock:
        with self._lock:
            block = self.blocks.get(bytes(key_id))
            if block is None:
                raise UnknownKeyId(f"{self.owner} holds no key {bytes(key_id).hex()}")
            if block.consumed:
                raise KeyAlreadyConsumed(f"key {block.hex_id} already consumed at {self.owner}")
            self._consume(block)
            return self._handout(block)

    def reserve(self, length_bits: int, peer: Optional[str] = None) -> KeyBlock:
        with self._lock:
            if peer is None:
                if len(self.peers) != 1:
                    raise KeyStoreError(f"{self.owner} has {len(self.peers)} peers; name one")
                peer = next(iter(self.peers))
            if length_bits <= 0:
                raise ValueError("length_bits must be positive")
            have = self.available_for(peer)
            if have < length_bits:
                raise InsufficientKeyMaterial(
                    f"{self.owner}: {have} bits for {peer}, {length_bits} requested")
            if length_bits % 8:
                raise ValueError("key material is handed out in whole bytes")

            q = self._queue(peer)
            taken: list[KeyBlock] = []
            have = 0
            while have < length_bits:
                block = self.blocks[q.popleft()]
                if not block.consumed:
                    taken.append(block)
                    have += block.length_bits
            if have > length_bits:
                last = taken.pop()
                taken.append(self._split(last, last.length_bits - (have - length_bits)))
            result = taken[0] if len(taken) == 1 else self._compose(taken)
            for block in taken:
                if not block.consumed:
                    self._consume(block)
            if not result.consumed:
                self._consume(result)
            return self._handout(result)

    # Splits and compositions are mirrored at the peer store so both ends can
    # resolve the derived key ids; only the reserving store consumes.

    def _split(self, block: KeyBlock, head_bits: int) -> KeyBlock:
        """Retire ``block`` for a head of ``head_bits`` and a queued tail; return the head."""
        head, tail = _split_block(block, head_bits // 8)
        self._consume(block)
        self.deposit(tail, at=0)
        head = self.deposit(head, queued=False)
        peer = self.peers.get(self.peer_of(block))
        if peer is not None:
            with peer._lock:
                original = peer.blocks.get(block.key_id)
                if original is not None and not original.consumed:
                    idx = peer._pull(original)
                    peer._consume(original)
                    peer.deposit(tail, at=idx)
                    peer.deposit(head, at=idx)
        return head

    def _compose(self, parts: list[KeyBlock]) -> KeyBlock:
        composite = self.deposit(_compose_blocks(parts), queued=False)
        peer = self.peers.get(self.peer_of(composite))
        if peer is not None:
            with peer._lock:
                originals = [peer.blocks.get(p.key_id) for p in parts]
                if all(o is not None and not o.consumed for o in originals):
                    idx = min(peer._pull(o) for o in originals)
                    for o in originals:
                        peer._consume(o)
                    peer.deposit(composite, at=idx)
        return composite

    def _pull(self, block: KeyBlock) -> int:
        """Remove ``block`` from its queue and return the slot it occupied."""
        q = self._queue(self.peer_of(block))
        try:
            idx = q.index(block.key_id)
        except ValueError:
            return 0
        del q[idx]
        return idx

    def check_invariants(self) -> None:
        with self._lock:
            expected = sum(b.length_bits for b in self.blocks.values() if not b.consumed)
            if expected != self._available:
                raise AssertionError(f"{self.owner}: tracked {self._available} bits, blocks hold {expected}")

    def dump(self) -> str:
        """Tab-separated listing: key_id, length_bits, consumed, pair."""
        with self._lock:
            lines = ["key_id\tlength_bits\tconsumed\tpair"]
            for block in self.blocks.values():
                lines.append(f"{block.hex_id}\t{block.length_bits}\t{int(block.consumed)}\t"
                             f"{block.pair[0]}:{block.pair[1]}")
            return "\n".join(lines) + "\n"


def _split_block(block: KeyBlock, head_bytes: int) -> tuple[KeyBlock, KeyBlock]:
    head = KeyBlock(derive_key_id(block.key_id, f"head:{head_bytes}"), block.material[:head_bytes],
                    block.pair, block.created_at)
    tail = KeyBlock(derive_key_id(block.key_id, f"tail:{head_bytes}"), block.material[head_bytes:],
                    block.pair, block.created_at)
    return head, tail


def _compose_blocks(parts: list[KeyBlock]) -> KeyBlock:
    ids = b"".join(p.key_id for p in parts)
    return KeyBlock(derive_key_id(ids, f"compose:{len(parts)}"),
                    b"".join(p.material for p in parts), parts[0].pair, parts[-1].created_at)


def reserve_key(store: KeyStore, length_bits: int, peer: Optional[str] = None) -> KeyBlock:
    """Take exactly ``length_bits`` of the oldest unconsumed material for ``peer``."""
    return store.reserve(length_bits, peer)


def fetch_key_by_id(store: KeyStore, key_id: bytes) -> KeyBlock:
    return store.fetch(key_id)


@dataclass
class QkdEndpoint:
    node_id: str
    role: str  # "alice" | "bob"
    key_store: KeyStore
    active: Optional["QkdSession"] = field(default=None, repr=False)


class Phase(enum.Enum):
    IDLE = "idle"
    PATH_PENDING = "path-pending"
    INITIALIZING = "initializing"
    GENERATING = "generating"
    TORN_DOWN = "torn-down"


class QkdSession:
    """One Alice-Bob key generation run over an established quantum path."""

    def __init__(self, alice: QkdEndpoint, bob: QkdEndpoint, path, distance_km: float,
                 model: link_model.ChannelModel = link_model.DEFAULT_MODEL,
                 block_bits: int = DEFAULT_BLOCK_BITS, seed=0, trace=None, job=None):
        if block_bits <= 0 or block_bits % 8:
            raise ValueError("block_bits must be a positive multiple of 8")
        self.alice = alice
        self.bob = bob
        self.path = path
        self.distance_km = distance_km
        self.model = model
        self.block_bits = block_bits
        self.phase = Phase.PATH_PENDING
        self.started_at: Optional[float] = None
        self.init_until: Optional[float] = None
        self.stopped_at: Optional[float] = None
        self.blocks_cut = 0
        self.remainder_bits = 0
        self.trace = trace
        self.job = job
        self._rng = np.random.default_rng(seed)

    @property
    def bits_banked(self) -> int:
        return self.blocks_cut * self.block_bits

    def _log(self, t, kind, size=0):
        if self.trace is not None:
            self.trace.record(t, f"{self.alice.node_id}<->{self.bob.node_id}", kind, size, self.job)

    def advance(self, now: float) -> list[KeyBlock]:
        """Move the session to time ``now`` and bank every completed block."""
        if self.phase not in (Phase.INITIALIZING, Phase.GENERATING):
            raise InvalidTransition(f"cannot advance a session in phase {self.phase.value}")
        if self.phase is Phase.INITIALIZING:
            if now < self.init_until:
                return []
            self.phase = Phase.GENERATING
            self._log(self.init_until, "session-generating")
        total = link_model.key_bits_generated(self.model, self.distance_km, now - self.started_at)
        due = total // self.block_bits
        self.remainder_bits = total % self.block_bits
        count = due - self.blocks_cut
        if count <= 0:
            return []
        stride = KEY_ID_BYTES + self.block_bits // 8
        raw = self._rng.bytes(count * stride)
        pair = (self.alice.node_id, self.bob.node_id)
        new = []
        for off in range(0, len(raw), stride):
            block = KeyBlock(raw[off:off + KEY_ID_BYTES], raw[off + KEY_ID_BYTES:off + stride], pair, now)
            self.alice.key_store.deposit(block)
            self.bob.key_store.deposit(block)
            new.append(block)
        self.blocks_cut = due
        return new

    def stop(self, now: Optional[float] = None) -> "QkdSession":
        if self.phase is Phase.TORN_DOWN:
            return self
        self.phase = Phase.TORN_DOWN
        self.remainder_bits = 0
        self.stopped_at = now
        if self.alice.active is self:
            self.alice.active = None
        if now is not None:
            self._log(now, "session-stop", self.bits_banked)
        return self


def start_session(alice: QkdEndpoint, bob: QkdEndpoint, path, distance_km: float, clock,
                  switch=None, **kwargs) -> QkdSession:
    """Start key generation; the session initializes until ``now + init_time``.

    ``switch``, when given, must already carry every cross-connect of ``path``.
    """
    active = alice.active
    if active is not None and active.phase in (Phase.INITIALIZING, Phase.GENERATING):
        raise AliceBusy(f"{alice.node_id} is serving {active.bob.node_id}")
    if switch is not None and not switch.is_established(path):
        raise PathNotEstablished(f"quantum path {alice.node_id}->{bob.node_id} is not established")
    alice.key_store.link(bob.key_store)
    session = QkdSession(alice, bob, path, distance_km, **kwargs)
    session.started_at = clock.now
    session.init_until = clock.now + link_model.init_time_s(session.model, distance_km)
    session.phase = Phase.INITIALIZING
    alice.active = session
    session._log(clock.now, "session-start")
    return session
