"""Sequential time-sharing of the single Alice across Bob nodes.

For each demand, in policy order: connect Alice to the Bob over quantum
fiber, start the key servers, wait out initialization, generate until the
demand is banked at both ends, then stop and release the fiber.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import link_model
from .errors import QkdNfvError
from .network import SWITCH_DELAY_S, OpticalSwitch, Path, Topology, compute_path
from .session import DEFAULT_BLOCK_BITS, QkdEndpoint, start_session
from .trace import Trace

TICK_S = 0.001
POLICIES = ("fifo", "shortest-distance-first")


@dataclass(frozen=True)
class KeyDemand:
    bob: str
    requested_bits: int

    def __post_init__(self):
        if int(self.requested_bits) != self.requested_bits or self.requested_bits <= 0:
            raise ValueError(f"demand for {self.bob}: requested_bits must be a positive integer")


@dataclass(frozen=True)
class ScheduleEntry:
    bob: str
    start: float
    switch: float
    init: float
    generation: float
    end: float
    path: Path
    requested_bits: int
    planned_bits: int

    @property
    def duration(self) -> float:
        return self.switch + self.init + self.generation


@dataclass(frozen=True)
class Schedule:
    entries: tuple[ScheduleEntry, ...]
    policy: str
    block_bits: int = DEFAULT_BLOCK_BITS

    @property
    def makespan(self) -> float:
        return max((e.end for e in self.entries), default=0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bob", "start", "switch", "init", "generation", "end"])
        for e in self.entries:
            writer.writerow([e.bob, e.start, e.switch, e.init, e.generation, e.end])
        return buf.getvalue()


def build_schedule(demands, topology: Topology, model: link_model.ChannelModel = link_model.DEFAULT_MODEL,
                   policy: str = "fifo", block_bits: int = DEFAULT_BLOCK_BITS,
                   start: float = 0.0) -> Schedule:
    """Closed-form plan; raises NoPath if any Bob is unreachable over quantum fiber."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
    alice = topology.alice
    planned = []
    for order, demand in enumerate(demands):
        path = compute_path(topology, alice, demand.bob, "quantum")
        planned.append((order, demand, path))
    if policy == "shortest-distance-first":
        planned.sort(key=lambda item: (item[2].length_km, item[1].bob, item[0]))

    entries = []
    t = start
    for _, demand, path in planned:
        d = path.length_km
        switch = SWITCH_DELAY_S * 2 * path.hops
        init = link_model.init_time_s(model, d)
        bits = math.ceil(demand.requested_bits / block_bits) * block_bits
        generation = bits / link_model.secret_key_rate_bps(model, d)
        end = t + switch + init + generation
        entries.append(ScheduleEntry(demand.bob, t, switch, init, generation, end, path,
                                     demand.requested_bits, bits))
        t = end
    return Schedule(tuple(entries), policy, block_bits)


@dataclass
class ExecutedEntry:
    bob: str
    planned_end: float
    start: float
    end: Optional[float] = None
    delivered_bits: int = 0
    status: str = "pending"  # pending | completed | failed | aborted
    error: Optional[str] = None


@dataclass
class ExecutionReport:
    policy: str
    entries: list[ExecutedEntry] = field(default_factory=list)
    trace: Trace = field(default_factory=Trace)
    error: Optional[str] = None

    @property
    def completed(self) -> bool:
        return self.error is None and all(e.status == "completed" for e in self.entries)

    @property
    def end_time(self) -> float:
        return max((e.end for e in self.entries if e.end is not None), default=0.0)

    def delivered(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.bob] = out.get(e.bob, 0) + e.delivered_bits
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bob", "status", "start", "planned_end", "executed_end", "delivered_bits"])
        for e in self.entries:
            writer.writerow([e.bob, e.status, e.start, e.planned_end,
                             "" if e.end is None else e.end, e.delivered_bits])
        return buf.getvalue()


def execute_schedule(schedule: Schedule, switch: OpticalSwitch, alice: QkdEndpoint,
                     bobs: dict[str, QkdEndpoint], clock, *,
                     model: link_model.ChannelModel = link_model.DEFAULT_MODEL,
                     seed: int = 0, trace: Optional[Trace] = None,
                     before_entry: Optional[Callable[[int, ScheduleEntry], None]] = None) -> ExecutionReport:
    """Run the plan on ``clock``; on the first failure the rest is aborted.

    Time jumps straight to each planned event and then creeps forward one
    tick at a time only if floating-point rounding left the demand short.
    """
    report = ExecutionReport(schedule.policy, trace=trace if trace is not None else Trace())
    trace = report.trace
    origin = clock.now
    for index, entry in enumerate(schedule.entries):
        done = ExecutedEntry(entry.bob, origin + entry.end, clock.now)
        report.entries.append(done)
        job = f"sched-{index + 1:02d}"
        session = None
        established = False
        try:
            if before_entry is not None:
                before_entry(index, entry)
            switch.establish_path(entry.path, clock, trace, job)
            established = True
            session = start_session(alice, bobs[entry.bob], entry.path, entry.path.length_km, clock,
                                    switch=switch, model=model, block_bits=schedule.block_bits,
                                    seed=[seed, index], trace=trace, job=job)
            clock.advance_to(session.init_until + entry.generation)
            session.advance(clock.now)
            while session.bits_banked < entry.requested_bits:
                clock.advance(TICK_S)
                session.advance(clock.now)
            done.delivered_bits = session.bits_banked
            session.stop(clock.now)
            session = None
            switch.teardown_path(entry.path, clock, trace, job)
            established = False
            done.end = clock.now
            done.status = "completed"
        except (QkdNfvError, KeyError) as exc:
            done.status = "failed"
            done.error = getattr(exc, "reason", type(exc).__name__)
            report.error = f"{entry.bob}: {exc}"
            if session is not None:
                done.delivered_bits = session.bits_banked
                session.stop(clock.now)
            if established:
                switch.teardown_path(entry.path, clock, trace, job)
            for rest in schedule.entries[index + 1:]:
                report.entries.append(ExecutedEntry(rest.bob, origin + rest.end, clock.now, status="aborted"))
            break
    return report
