import pytest

from qkdnfv.clock import SimClock
from qkdnfv.network import Node, OpticalSwitch, Segment, Topology
from qkdnfv.session import KeyStore, QkdEndpoint
from qkdnfv.trace import Trace

ACCEPTANCE_RESULTS = []


def one_switch_topology(bob_km=None, alice_km=0.0):
    """Alice and Bobs hanging off one switch partition, quantum and classical fibers."""
    bob_km = bob_km or {"bob1": 0.0}
    switch_ports = ["s.aq", "s.ac"]
    nodes = [Node("alice", "alice", ("alice.q", "alice.c"))]
    segments = [Segment("alice.q", "s.aq", alice_km, "quantum"),
                Segment("alice.c", "s.ac", alice_km, "classical")]
    for bob, km in bob_km.items():
        nodes.append(Node(bob, "bob", (f"{bob}.q", f"{bob}.c")))
        switch_ports += [f"s.{bob}q", f"s.{bob}c"]
        segments.append(Segment(f"s.{bob}q", f"{bob}.q", km, "quantum"))
        segments.append(Segment(f"s.{bob}c", f"{bob}.c", km, "classical"))
    nodes.append(Node("sw", "switch", tuple(switch_ports)))
    return Topology(nodes, segments)


class Rig:
    def __init__(self, topology):
        self.topology = topology
        self.switch = OpticalSwitch(topology)
        self.clock = SimClock()
        self.trace = Trace()
        self.alice = QkdEndpoint(topology.alice, "alice", KeyStore(topology.alice))
        self.bobs = {b: QkdEndpoint(b, "bob", KeyStore(b)) for b in topology.bobs}


@pytest.fixture
def rig():
    return Rig(one_switch_topology({"bob1": 0.0, "bob2": 25.0}))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
