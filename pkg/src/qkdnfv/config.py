"""Scenario configuration: one YAML (or JSON) file.

Schema (every key optional; missing keys take the defaults shown)::

    seed: 1
    mode: simulate              # simulate | serve
    out_dir: out
    policy: fifo                # fifo | shortest-distance-first
    cipher: aes256              # aes256 | otp
    block_bits: 256
    image_size: 16777216        # bytes, default for transfers without a size
    host: 127.0.0.1             # serve mode listeners
    sweep_distances_km: [0, 2.5, 5, ..., 25]
    channel:                    # link model; anchor or per-km form
      atten_coeff: 0.2
      init_time_b2b: 400        # plus init_time_ref or init_growth
      rate_b2b: 4000            # plus rate_ref or rate_decay
      qber_b2b: 0.010           # plus qber_ref or qber_slope
      ref_km: 25
      init_form: {kind: double_exponential, a: .., b: .., c: .., e: ..}
    throughput:                 # simulated bytes/s for the transfer phases
      encrypt: 1.27e8
      send: 4.85e8
      decrypt: 1.11e8
    topology:
      bob_distances_km: [0, 10, 25]       # generated test-bed layout, or
      nodes: [{id: node1, role: alice, ports: [node1.q, node1.c]}, ...]
      segments: [{a: node1.q, b: sw1.q0, km: 0, channel: quantum}, ...]
    demands:   [{bob: node2, bits: 4096}, ...]
    transfers: [{dest: node2, size: 1048576, name: firewall}, ...]
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any, Optional

import yaml

from .clock import Throughput
from .crypto import CipherMode
from .errors import ConfigError, NetworkError
from .link_model import ChannelModel, DoubleExponential
from .network import Topology, default_topology
from .scheduler import POLICIES, KeyDemand
from .session import DEFAULT_BLOCK_BITS

MODES = ("simulate", "serve")
DEFAULT_IMAGE_SIZE = 16 * 1024 * 1024
DEFAULT_SWEEP = tuple(2.5 * i for i in range(11))


@dataclass(frozen=True)
class TransferRequest:
    dest: str
    size: int
    name: str = "vnf-image"


@dataclass
class ScenarioConfig:
    topology: Topology = field(default_factory=default_topology)
    model: ChannelModel = field(default_factory=ChannelModel)
    demands: list[KeyDemand] = field(default_factory=list)
    transfers: list[TransferRequest] = field(default_factory=list)
    cipher: CipherMode = CipherMode.AES256
    block_bits: int = DEFAULT_BLOCK_BITS
    image_size: int = DEFAULT_IMAGE_SIZE
    policy: str = "fifo"
    seed: int = 1
    mode: str = "simulate"
    out_dir: str = "out"
    host: str = "127.0.0.1"
    sweep_distances_km: tuple[float, ...] = DEFAULT_SWEEP
    throughput: Throughput = field(default_factory=Throughput)
    source: Optional[str] = None
    raw_topology: Optional[dict] = None

    def problems(self) -> list[str]:
        out = []
        bobs = set(self.topology.bobs)
        try:
            self.topology.alice
        except NetworkError as exc:
            out.append(str(exc))
        if not bobs:
            out.append("topology has no bob nodes")
        for d in self.demands:
            if d.bob not in bobs:
                out.append(f"demand names {d.bob!r}, which is not a bob node")
        for t in self.transfers:
            if t.dest not in bobs:
                out.append(f"transfer names {t.dest!r}, which is not a bob node")
            if t.size < 0:
                out.append(f"transfer to {t.dest}: negative size")
        if self.block_bits <= 0 or self.block_bits % 8:
            out.append("block_bits must be a positive multiple of 8")
        if self.policy not in POLICIES:
            out.append(f"policy must be one of {POLICIES}")
        if self.mode not in MODES:
            out.append(f"mode must be one of {MODES}")
        for d in self.sweep_distances_km:
            if not (math.isfinite(d) and d >= 0):
                out.append(f"sweep distance {d!r} is not a non-negative number")
        return out

    def check(self) -> "ScenarioConfig":
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def resolved(self) -> dict:
        topo = self.raw_topology if self.raw_topology is not None else self.topology.to_mapping()
        return {
            "seed": self.seed,
            "mode": self.mode,
            "out_dir": self.out_dir,
            "policy": self.policy,
            "cipher": self.cipher.value,
            "block_bits": self.block_bits,
            "image_size": self.image_size,
            "host": self.host,
            "sweep_distances_km": list(self.sweep_distances_km),
            "channel": self.model.as_dict(),
            "throughput": {"encrypt": self.throughput.encrypt, "send": self.throughput.send,
                           "decrypt": self.throughput.decrypt},
            "topology": topo,
            "demands": [{"bob": d.bob, "bits": d.requested_bits} for d in self.demands],
            "transfers": [{"dest": t.dest, "size": t.size, "name": t.name} for t in self.transfers],
        }


def _model(data: dict) -> ChannelModel:
    data = dict(data)
    form = data.pop("init_form", None)
    curve = None
    if form is not None:
        form = dict(form)
        if form.pop("kind", "double_exponential") != "double_exponential":
            raise ConfigError("init_form.kind must be double_exponential")
        curve = DoubleExponential(**{k: float(v) for k, v in form.items()})
    per_km = {"init_growth", "rate_decay", "qber_slope"} & data.keys()
    anchors = {"init_time_ref", "rate_ref", "qber_ref"} & data.keys()
    if per_km and anchors:
        raise ConfigError("channel: give either reference values or per-km coefficients, not both")
    values = {k: float(v) for k, v in data.items()}
    if per_km:
        return ChannelModel.from_coefficients(init_curve=curve, **values)
    return ChannelModel(init_curve=curve, **values)


def _topology(data: Optional[dict]) -> Topology:
    if not data:
        return default_topology()
    if "nodes" in data:
        return Topology.from_mapping(data)
    return default_topology(tuple(float(d) for d in data.get("bob_distances_km", (0, 10, 25))))


def config_from_mapping(data: dict[str, Any], source: Optional[str] = None) -> ScenarioConfig:
    known = {"seed", "mode", "out_dir", "policy", "cipher", "block_bits", "image_size", "host",
             "sweep_distances_km", "channel", "throughput", "topology", "demands", "transfers"}
    data = dict(data or {})
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    try:
        image_size = int(data.get("image_size", DEFAULT_IMAGE_SIZE))
        cfg = ScenarioConfig(
            topology=_topology(data.get("topology")),
            model=_model(data.get("channel") or {}),
            demands=[KeyDemand(str(d["bob"]), int(d["bits"])) for d in data.get("demands") or ()],
            transfers=[TransferRequest(str(t["dest"]), int(t.get("size", image_size)),
                                       str(t.get("name", f"vnf-image-{i + 1}")))
                       for i, t in enumerate(data.get("transfers") or ())],
            cipher=CipherMode(str(data.get("cipher", "aes256"))),
            block_bits=int(data.get("block_bits", DEFAULT_BLOCK_BITS)),
            image_size=image_size,
            policy=str(data.get("policy", "fifo")),
            seed=int(data.get("seed", 1)),
            mode=str(data.get("mode", "simulate")),
            out_dir=str(data.get("out_dir", "out")),
            host=str(data.get("host", "127.0.0.1")),
            sweep_distances_km=tuple(float(d) for d in data.get("sweep_distances_km", DEFAULT_SWEEP)),
            throughput=Throughput(**{k: float(v) for k, v in (data.get("throughput") or {}).items()}),
            source=source,
            raw_topology=data.get("topology"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, NetworkError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return cfg.check()


def load_config(path) -> ScenarioConfig:
    path = FsPath(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(data or {}, source=str(path))
