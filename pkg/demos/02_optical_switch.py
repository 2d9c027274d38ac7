"""
Optical switch: path computation and cross-connects
===================================================

The test-bed switch is split in two partitions joined by short trunks.
Every Alice to Bob route therefore crosses two cross-connects.
"""

from qkdnfv.clock import SimClock
from qkdnfv.errors import NoPath, PortBusy
from qkdnfv.network import OpticalSwitch, default_topology
from qkdnfv.trace import Trace

topo = default_topology((0, 10, 25))
switch = OpticalSwitch(topo)
clock, trace = SimClock(), Trace()

print("alice:", topo.alice, " bobs:", topo.bobs)

path = switch.compute_path("node1", "node4", "quantum")
print("ports:", " -> ".join(path.ports))
print(f"{path.length_km} km through {path.hops} cross-connects")

# each flow-mod costs 25 ms on the switch
switch.establish_path(path, clock, trace, "demo")
print("active:", sorted(switch.snapshot()), f"t = {clock.now:.3f} s")

# Alice has one quantum port, so a second quantum path cannot be found
try:
    switch.compute_path("node1", "node2", "quantum")
except NoPath as exc:
    print("second quantum path:", exc.reason)

# the classical fibers are separate and remain free
other = switch.compute_path("node1", "node2", "classical")
print("classical path to node2:", other.crossconnects)

# a conflicting cross-connect is refused outright
busy_port = path.crossconnects[0][1]
try:
    switch.apply_control(switch.message("add-crossconnect", other.crossconnects[0][0], busy_port), clock)
except PortBusy as exc:
    print("conflict:", exc.reason)

switch.teardown_path(path, clock, trace, "demo")
print("after teardown:", switch.snapshot() or "nothing", f"t = {clock.now:.3f} s")
print()
print(trace.dump(), end="")
