"""Emulated SDN optical circuit switch and the fiber topology it steers.

Nodes are endpoints (``alice``/``bob``) or switch partitions (``switch``).
Every port belongs to exactly one node and terminates at most one fiber
segment. A cross-connect joins two free ports of the same switch partition.
Quantum and classical traffic never share a segment.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import CrossConnectNotFound, NetworkError, NoPath, PortBusy, UnknownPort
from .wire import Kind, WireMessage

SWITCH_DELAY_S = 0.025
CHANNELS = ("quantum", "classical")
ROLES = ("alice", "bob", "switch")


@dataclass(frozen=True)
class Node:
    id: str
    role: str
    ports: tuple[str, ...] = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise NetworkError(f"node {self.id}: unknown role {self.role!r}")


@dataclass(frozen=True)
class Segment:
    a: str
    b: str
    km: float
    channel: str

    def __post_init__(self):
        if self.a == self.b:
            raise NetworkError(f"segment joins port {self.a} to itself")
        if self.channel not in CHANNELS:
            raise NetworkError(f"segment {self.a}-{self.b}: unknown channel {self.channel!r}")
        if not self.km >= 0:
            raise NetworkError(f"segment {self.a}-{self.b}: negative length")

    def other(self, port: str) -> str:
        return self.b if port == self.a else self.a


class Topology:
    def __init__(self, nodes: Iterable[Node], segments: Iterable[Segment]):
        self.nodes: dict[str, Node] = {}
        self.owner: dict[str, str] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise NetworkError(f"duplicate node {node.id}")
            self.nodes[node.id] = node
            for port in node.ports:
                if port in self.owner:
                    raise NetworkError(f"port {port} owned by both {self.owner[port]} and {node.id}")
                self.owner[port] = node.id
        self.segments: list[Segment] = list(segments)
        self.segment_at: dict[str, Segment] = {}
        for seg in self.segments:
            for port in (seg.a, seg.b):
                if port not in self.owner:
                    raise UnknownPort(f"segment references unknown port {port}")
                if port in self.segment_at:
                    raise NetworkError(f"port {port} terminates more than one segment")
                self.segment_at[port] = seg
        alices = [n.id for n in self.nodes.values() if n.role == "alice"]
        if len(alices) > 1:
            raise NetworkError(f"exactly one alice node allowed, found {alices}")

    @property
    def alice(self) -> str:
        for node in self.nodes.values():
            if node.role == "alice":
                return node.id
        raise NetworkError("topology has no alice node")

    @property
    def bobs(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.role == "bob"]

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NetworkError(f"unknown node {node_id}") from None

    def is_switch_port(self, port: str) -> bool:
        return self.nodes[self.owner[port]].role == "switch"

    def check_port(self, port: str) -> None:
        if port not in self.owner:
            raise UnknownPort(f"unknown port {port}")

    @classmethod
    def from_mapping(cls, data: dict) -> "Topology":
        try:
            nodes = [Node(str(n["id"]), str(n["role"]), tuple(str(p) for p in n.get("ports", ())))
                     for n in data["nodes"]]
            segments = [Segment(str(s["a"]), str(s["b"]), float(s["km"]), str(s["channel"]))
                        for s in data.get("segments", ())]
        except (KeyError, TypeError) as exc:
            raise NetworkError(f"malformed topology: {exc}") from exc
        return cls(nodes, segments)

    def to_mapping(self) -> dict:
        return {
            "nodes": [{"id": n.id, "role": n.role, "ports": list(n.ports)} for n in self.nodes.values()],
            "segments": [{"a": s.a, "b": s.b, "km": s.km, "channel": s.channel} for s in self.segments],
        }


def default_topology(bob_distances_km=(0.0, 10.0, 25.0)) -> Topology:
    """Test-bed layout: Alice on node1, Bobs on node2.., two switch partitions.

    The partitions ``sw1`` (Alice side) and ``sw2`` (Bob side) are joined by
    zero-length trunks, one per channel class, so each Alice-Bob path crosses
    two cross-connects and its length is the Bob's access fiber.
    """
    nodes = [Node("node1", "alice", ("node1.q", "node1.c"))]
    sw1 = ["sw1.q0", "sw1.c0", "sw1.q1", "sw1.c1"]
    sw2 = ["sw2.q0", "sw2.c0"]
    segments = [
        Segment("node1.q", "sw1.q0", 0.0, "quantum"),
        Segment("node1.c", "sw1.c0", 0.0, "classical"),
        Segment("sw1.q1", "sw2.q0", 0.0, "quantum"),
        Segment("sw1.c1", "sw2.c0", 0.0, "classical"),
    ]
    for i, km in enumerate(bob_distances_km):
        node = f"node{i + 2}"
        nodes.append(Node(node, "bob", (f"{node}.q", f"{node}.c")))
        sw2 += [f"sw2.q{i + 1}", f"sw2.c{i + 1}"]
        segments.append(Segment(f"sw2.q{i + 1}", f"{node}.q", float(km), "quantum"))
        segments.append(Segment(f"sw2.c{i + 1}", f"{node}.c", float(km), "classical"))
    nodes.append(Node("sw1", "switch", tuple(sw1)))
    nodes.append(Node("sw2", "switch", tuple(sw2)))
    return Topology(nodes, segments)


@dataclass(frozen=True)
class CrossConnect:
    ingress: str
    egress: str
    established_at: float = field(default=0.0, compare=False)

    @property
    def ports(self) -> tuple[str, str]:
        return (self.ingress, self.egress)


@dataclass(frozen=True)
class ControlMessage:
    kind: str  # "add-crossconnect" | "remove-crossconnect"
    ingress: str
    egress: str
    correlation_id: str

    def to_wire(self) -> WireMessage:
        return WireMessage.control(Kind.FLOW_MOD, op=self.kind, ingress=self.ingress,
                                   egress=self.egress, cid=self.correlation_id)


@dataclass(frozen=True)
class Path:
    """Port-level route; ``ports`` runs from the source node's port to the
    destination node's port."""

    src: str
    dst: str
    channel: str
    ports: tuple[str, ...]
    crossconnects: tuple[tuple[str, str], ...]
    length_km: float

    @property
    def hops(self) -> int:
        return len(self.crossconnects)


def compute_path(topology: Topology, from_node: str, to_node: str, channel: str,
                 busy: Iterable[str] = ()) -> Path:
    """Shortest loop-free path over segments of one channel class.

    Ties on length are broken by the lexicographically smallest port
    sequence. Ports in ``busy`` cannot be cross-connected.
    """
    if channel not in CHANNELS:
        raise NetworkError(f"unknown channel class {channel!r}")
    src = topology.node(from_node)
    dst = topology.node(to_node)
    if src.id == dst.id:
        return Path(src.id, dst.id, channel, (), (), 0.0)
    busy = set(busy)

    def usable(port):
        seg = topology.segment_at.get(port)
        return seg is not None and seg.channel == channel

    # Heap entries are (length, port sequence); popping in that order yields the
    # lexicographically smallest sequence among equal-length shortest paths.
    heap = []
    for port in sorted(src.ports):
        if usable(port):
            seg = topology.segment_at[port]
            heapq.heappush(heap, (seg.km, (port, seg.other(port))))
    settled = set()
    while heap:
        length, seq = heapq.heappop(heap)
        arrived = seq[-1]
        if arrived in settled:
            continue
        settled.add(arrived)
        owner = topology.nodes[topology.owner[arrived]]
        if owner.id == dst.id:
            xcs = tuple((seq[i], seq[i + 1]) for i in range(1, len(seq) - 1, 2))
            return Path(src.id, dst.id, channel, seq, xcs, length)
        if owner.role != "switch" or arrived in busy:
            continue
        for out in owner.ports:
            if out == arrived or out in busy or out in seq or not usable(out):
                continue
            nxt = topology.segment_at[out].other(out)
            if nxt in seq or nxt in settled:
                continue
            heapq.heappush(heap, (length + topology.segment_at[out].km, seq + (out, nxt)))
    raise NoPath(f"no free {channel} path from {from_node} to {to_node}")


def path_length(topology: Topology, ports: tuple[str, ...]) -> float:
    """Sum segment lengths along a port sequence (segments sit at even offsets)."""
    total = 0.0
    for i in range(0, len(ports) - 1, 2):
        seg = topology.segment_at[ports[i]]
        if seg.other(ports[i]) != ports[i + 1]:
            raise NetworkError(f"{ports[i]} and {ports[i + 1]} are not joined by a segment")
        total += seg.km
    return total


class OpticalSwitch:
    """Cross-connect state of every switch partition in a topology.

    All mutations go through :meth:`apply_control`; callers serialize them.
    """

    def __init__(self, topology: Topology, name: str = "switch"):
        self.topology = topology
        self.name = name
        self.connections: dict[tuple[str, str], CrossConnect] = {}
        self._port_use: dict[str, tuple[str, str]] = {}
        self._cid = itertools.count(1)

    def message(self, kind: str, ingress: str, egress: str) -> ControlMessage:
        return ControlMessage(kind, ingress, egress, f"cm-{next(self._cid):06d}")

    @property
    def busy_ports(self) -> frozenset[str]:
        return frozenset(self._port_use)

    def snapshot(self) -> frozenset[tuple[str, str]]:
        return frozenset(self.connections)

    def is_established(self, path: Path) -> bool:
        return all(xc in self.connections for xc in path.crossconnects)

    def apply_control(self, msg: ControlMessage, clock, trace=None, job: Optional[str] = None) -> None:
        topo = self.topology
        topo.check_port(msg.ingress)
        topo.check_port(msg.egress)
        key = (msg.ingress, msg.egress)
        if msg.kind == "add-crossconnect":
            if topo.owner[msg.ingress] != topo.owner[msg.egress] or not topo.is_switch_port(msg.ingress):
                raise NetworkError(f"{msg.ingress} and {msg.egress} are not on one switch partition")
            if msg.ingress == msg.egress:
                raise NetworkError(f"cannot cross-connect port {msg.ingress} to itself")
            for port in key:
                if port in self._port_use:
                    raise PortBusy(f"port {port} already in cross-connect {self._port_use[port]}")
        elif msg.kind == "remove-crossconnect":
            if key not in self.connections:
                raise CrossConnectNotFound(f"no cross-connect {msg.ingress}->{msg.egress}")
        else:
            raise NetworkError(f"unknown control message kind {msg.kind!r}")

        if trace is not None:
            trace.record(clock.now, f"orch->{self.name}", "flow-mod", msg.to_wire().size, job)
        clock.advance(SWITCH_DELAY_S)
        if msg.kind == "add-crossconnect":
            self.connections[key] = CrossConnect(msg.ingress, msg.egress, clock.now)
            for port in key:
                self._port_use[port] = key
        else:
            del self.connections[key]
            for port in key:
                del self._port_use[port]

    def establish_path(self, path: Path, clock, trace=None, job=None) -> None:
        """Apply every cross-connect of ``path``; all or nothing."""
        done = []
        try:
            for ingress, egress in path.crossconnects:
                self.apply_control(self.message("add-crossconnect", ingress, egress), clock, trace, job)
                done.append((ingress, egress))
        except NetworkError:
            for ingress, egress in reversed(done):
                self.apply_control(self.message("remove-crossconnect", ingress, egress), clock, trace, job)
            raise

    def teardown_path(self, path: Path, clock, trace=None, job=None) -> None:
        missing = [xc for xc in path.crossconnects if xc not in self.connections]
        if missing:
            raise CrossConnectNotFound(f"path is not fully established, missing {missing}")
        for ingress, egress in reversed(path.crossconnects):
            self.apply_control(self.message("remove-crossconnect", ingress, egress), clock, trace, job)

    def compute_path(self, from_node: str, to_node: str, channel: str) -> Path:
        return compute_path(self.topology, from_node, to_node, channel, busy=self.busy_ports)
