"""Wire the subsystems together and run whole scenarios."""
from __future__ import annotations

import contextlib
import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

from . import link_model
from .clock import SimClock, WallClock
from .config import ScenarioConfig
from .crypto import CounterNonces, key_bits_needed, random_nonce
from .network import OpticalSwitch
from .orchestrator import LocalLink, Orchestrator, SlaveServer, SlaveStack, SocketLink, TransferJob, VnfImage
from .scheduler import ExecutionReport, KeyDemand, Schedule, build_schedule, execute_schedule
from .session import KeyStore, QkdEndpoint
from .trace import Trace

SWEEP_COLUMNS = ("distance_km", "init_time_s", "key_rate_bps", "qber", "attenuation_db")


def fig2_sweep(model: link_model.ChannelModel, distances) -> str:
    """CSV of the link model at each distance (init time, key rate, QBER, attenuation)."""
    distances = [float(d) for d in distances]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for d in distances:
        writer.writerow([d, link_model.init_time_s(model, d), link_model.secret_key_rate_bps(model, d),
                         link_model.qber(model, d), link_model.attenuation_db(model, d)])
    return buf.getvalue()


def gnuplot_script(csv_name: str) -> str:
    return f"""\
set datafile separator ','
set key autotitle columnhead
set xlabel 'distance (km)'
set terminal pngcairo size 1200,400
set output '{csv_name.rsplit('.', 1)[0]}.png'
set multiplot layout 1,3
set ylabel 'initialization time (s)'
plot '{csv_name}' using 1:2 with linespoints
set ylabel 'secret key rate (b/s)'
set logscale y
plot '{csv_name}' using 1:3 with linespoints
unset logscale y
set ylabel 'QBER'
set y2label 'attenuation (dB)'
set y2tics
plot '{csv_name}' using 1:4 with linespoints axes x1y1, '' using 1:5 with linespoints axes x1y2
unset multiplot
"""


@dataclass
class Testbed:
    config: ScenarioConfig
    switch: OpticalSwitch
    clock: SimClock
    trace: Trace
    alice: QkdEndpoint
    bobs: dict[str, QkdEndpoint]

    @classmethod
    def build(cls, config: ScenarioConfig) -> "Testbed":
        topo = config.topology
        alice = QkdEndpoint(topo.alice, "alice", KeyStore(topo.alice))
        bobs = {b: QkdEndpoint(b, "bob", KeyStore(b)) for b in topo.bobs}
        return cls(config, OpticalSwitch(topo), SimClock(throughput=config.throughput), Trace(), alice, bobs)

    def schedule(self, demands) -> Schedule:
        cfg = self.config
        return build_schedule(demands, cfg.topology, cfg.model, cfg.policy, cfg.block_bits,
                              start=self.clock.now)

    def execute(self, schedule: Schedule, **kwargs) -> ExecutionReport:
        return execute_schedule(schedule, self.switch, self.alice, self.bobs, self.clock,
                                model=self.config.model, seed=self.config.seed, trace=self.trace, **kwargs)


def run_timeshare(config: ScenarioConfig, testbed: Optional[Testbed] = None):
    """Plan and execute the configured key demands; returns (schedule, report, testbed)."""
    testbed = testbed or Testbed.build(config)
    schedule = testbed.schedule(config.demands)
    report = testbed.execute(schedule)
    return schedule, report, testbed


@dataclass
class ScenarioReport:
    schedule: Schedule
    execution: ExecutionReport
    jobs: list[TransferJob] = field(default_factory=list)
    trace: Trace = field(default_factory=Trace)
    deployed: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.execution.completed and all(j.state == "acked" for j in self.jobs)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(j.record(), sort_keys=True) + "\n" for j in self.jobs)

    def breakdown(self) -> str:
        lines = [f"{'job':<10}{'dest':<8}{'state':<10}{'encrypt_s':>12}{'send_s':>12}{'decrypt_s':>12}{'total_s':>12}"]
        for j in self.jobs:
            t = j.timings
            cells = [f"{t[k]:12.4f}" if k in t else f"{'-':>12}" for k in ("encrypt", "send", "decrypt", "total")]
            lines.append(f"{j.job_id:<10}{j.dest:<8}{j.state:<10}" + "".join(cells))
        return "\n".join(lines) + "\n"


def transfer_demands(config: ScenarioConfig) -> list[KeyDemand]:
    """Configured demands plus top-ups so every transfer finds its key."""
    demands = list(config.demands)
    block = config.block_bits
    planned: dict[str, int] = {}
    for d in demands:
        planned[d.bob] = planned.get(d.bob, 0) + -(-d.requested_bits // block) * block
    needed: dict[str, int] = {}
    for t in config.transfers:
        needed[t.dest] = needed.get(t.dest, 0) + key_bits_needed(config.cipher, t.size, block)
    for bob, bits in needed.items():
        short = bits - planned.get(bob, 0)
        if short > 0:
            demands.append(KeyDemand(bob, short))
    return demands


def run_secured_provisioning(config: ScenarioConfig, *, tamper=None) -> ScenarioReport:
    """Generate keys on the time-shared Alice, then push every configured image.

    Key generation always runs on the simulated clock. In serve mode the
    transfers then run against real localhost sockets on the wall clock.
    """
    testbed = Testbed.build(config)
    schedule = testbed.schedule(transfer_demands(config))
    execution = testbed.execute(schedule)
    report = ScenarioReport(schedule, execution, trace=testbed.trace)
    if not execution.completed:
        return report

    images = [VnfImage.synthetic(f"img-{i + 1:02d}", t.name, t.size, seed=[config.seed, 1000 + i])
              for i, t in enumerate(config.transfers)]
    slaves = {b: SlaveStack(b, ep.key_store) for b, ep in testbed.bobs.items()}
    with contextlib.ExitStack() as stack:
        if config.mode == "serve":
            clock = WallClock(offset=testbed.clock.now)
            links = {}
            for b, slave in slaves.items():
                slave.clock = WallClock()
                server = stack.enter_context(SlaveServer(slave, config.host, 0))
                links[b] = SocketLink(server.server_address)
            nonces = random_nonce
        else:
            clock = testbed.clock
            for slave in slaves.values():
                slave.clock = clock
            links = {b: LocalLink(slave) for b, slave in slaves.items()}
            nonces = CounterNonces((config.seed & 0xFFFFFFFF).to_bytes(4, "big"))
        orch = Orchestrator(testbed.alice.node_id, testbed.alice.key_store, testbed.switch, clock, links,
                            trace=testbed.trace, mode=config.cipher, block_bits=config.block_bits,
                            nonce_source=nonces)
        for image, request in zip(images, config.transfers):
            orch.add_image(image)
            report.jobs.append(orch.transfer_image(image.image_id, request.dest, tamper=tamper))
    for job in report.jobs:
        got = slaves[job.dest].deployed(job.image_id)
        if got is not None:
            report.deployed[job.job_id] = got
    return report
