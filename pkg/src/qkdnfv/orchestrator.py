"""Centralized orchestrator and slave DC stacks for secure VNF image transfer.

One job runs the workflow::

    transfer-init -> flow-mod+ -> key-request -> key-response -> image-chunk+
    -> key-id-notify -> deploy-report -> ack-200

Slaves are reached through a link: :class:`LocalLink` runs the slave inline
on the simulated clock, :class:`SocketLink` talks to a :class:`SlaveServer`
over TCP. Both carry the same encoded frames.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
import socket
import socketserver
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .clock import SimClock
from .crypto import CipherMode, EncryptedPayload, decrypt, encrypt, key_bits_needed, random_nonce, request_key
from .errors import CorruptImage, ProtocolError, QkdNfvError, TransferError, TruncatedStream
from .network import OpticalSwitch, Path
from .session import DEFAULT_BLOCK_BITS, KeyStore
from .trace import NO_JOB, Trace
from .wire import MAX_CHUNK, Kind, WireMessage, decode, iter_frames, read_message, read_messages

log = logging.getLogger(__name__)

STATES = ("requested", "path-setup", "key-obtained", "encrypted", "transferring",
          "notified", "decrypted", "deployed", "acked")


@dataclass(frozen=True)
class VnfImage:
    image_id: str
    name: str
    payload: bytes = field(repr=False)
    checksum: bytes = field(repr=False)

    def __post_init__(self):
        if hashlib.sha256(self.payload).digest() != self.checksum:
            raise CorruptImage(f"image {self.image_id}: checksum does not match payload")

    @classmethod
    def create(cls, image_id: str, name: str, payload: bytes) -> "VnfImage":
        payload = bytes(payload)
        return cls(image_id, name, payload, hashlib.sha256(payload).digest())

    @classmethod
    def synthetic(cls, image_id: str, name: str, size: int, seed=0) -> "VnfImage":
        return cls.create(image_id, name, np.random.default_rng(seed).bytes(size))

    @property
    def size(self) -> int:
        return len(self.payload)


@dataclass
class TransferJob:
    job_id: str
    image_id: str
    dest: str
    mode: CipherMode = CipherMode.AES256
    state: str = "requested"
    history: list[str] = field(default_factory=lambda: ["requested"])
    failed_at: Optional[str] = None
    reason: Optional[str] = None
    timings: dict[str, float] = field(default_factory=dict)
    bytes_sent: int = 0
    key_id: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.state == "failed"

    @property
    def next_state(self) -> Optional[str]:
        if self.failed or self.state == STATES[-1]:
            return None
        return STATES[STATES.index(self.state) + 1]

    def advance(self, state: str) -> None:
        if state != self.next_state:
            raise ProtocolError(f"job {self.job_id}: cannot go from {self.state} to {state}")
        self.state = state
        self.history.append(state)

    def fail(self, reason: str, at: Optional[str] = None) -> None:
        if self.failed:
            return
        self.failed_at = at or self.next_state
        self.reason = reason
        self.state = "failed"
        self.history.append("failed")

    def record(self) -> dict:
        return {
            "job": self.job_id,
            "image": self.image_id,
            "dest": self.dest,
            "mode": self.mode.value,
            "state": self.state,
            "failed_at": self.failed_at,
            "reason": self.reason,
            "states": list(self.history),
            "timings": dict(self.timings),
            "bytes": self.bytes_sent,
            "key_id": self.key_id,
        }


def nack(job: str, reason: str, stage: Optional[str] = None) -> WireMessage:
    return WireMessage.control(Kind.NACK, job=job, reason=reason, stage=stage)


class SlaveStack:
    """Remote DC stack: Bob key store, image staging and a stub VIM."""

    def __init__(self, node_id: str, key_store: KeyStore, clock=None):
        self.node_id = node_id
        self.key_store = key_store
        self.clock = clock if clock is not None else SimClock()
        self.staging: dict[str, bytearray] = {}
        self.vim: dict[str, VnfImage] = {}
        self._lock = threading.Lock()

    def deployed(self, image_id: str) -> Optional[VnfImage]:
        with self._lock:
            return self.vim.get(image_id)


def receive_and_deploy(slave: SlaveStack, messages: Iterable[WireMessage]) -> Optional[WireMessage]:
    """Consume one job's frames up to key-id-notify and answer it.

    Returns a deploy-report or a nack; None if the orchestrator aborted the
    job with its own nack.
    """
    messages = iter(messages)
    job = NO_JOB
    try:
        first = next(messages, None)
        if first is None:
            raise TruncatedStream("stream closed before transfer-init")
        if first.kind is not Kind.TRANSFER_INIT:
            raise ProtocolError(f"expected transfer-init, got {first.kind.label}")
        init = first.fields()
        job = init["job"]
        staged = slave.staging.setdefault(job, bytearray())
        for msg in messages:
            if msg.kind is Kind.IMAGE_CHUNK:
                staged += msg.body
            elif msg.kind is Kind.KEY_ID_NOTIFY:
                notify = msg.fields()
                break
            elif msg.kind is Kind.NACK:
                slave.staging.pop(job, None)
                return None
            else:
                raise ProtocolError(f"unexpected {msg.kind.label} during transfer")
        else:
            raise TruncatedStream(f"job {job}: stream closed before key-id-notify")
    except KeyError as exc:
        slave.staging.pop(job, None)
        return nack(job, ProtocolError.reason, "decrypted")
    except QkdNfvError as exc:
        slave.staging.pop(job, None)
        return nack(job, exc.reason, "decrypted")

    data = bytes(slave.staging.pop(job))
    stage = "decrypted"
    try:
        payload = EncryptedPayload.from_bytes(data)
        if payload.key_id.hex() != notify["key_id"]:
            raise ProtocolError("key id in notify differs from payload header")
        plaintext, decrypt_s = slave.clock.timed("decrypt", len(data), lambda: decrypt(payload, slave.key_store))
        stage = "deployed"
        digest = hashlib.sha256(plaintext).digest()
        if digest.hex() != init["checksum"]:
            raise CorruptImage(f"image {init['image_id']} failed checksum verification")
        image = VnfImage(init["image_id"], init["name"], plaintext, digest)
        with slave._lock:
            slave.vim[image.image_id] = image
    except QkdNfvError as exc:
        log.info("%s: job %s rejected: %s", slave.node_id, job, exc)
        return nack(job, exc.reason, stage)
    return WireMessage.control(Kind.DEPLOY_REPORT, job=job, image_id=init["image_id"],
                               checksum=digest.hex(), decrypt_s=decrypt_s, bytes=len(plaintext))


class LocalLink:
    """In-process link; frames are buffered and handed to the slave on reply."""

    def __init__(self, slave: SlaveStack):
        self.slave = slave
        self._outbox: list[bytes] = []

    def open(self) -> None:
        self._outbox = []

    def send(self, msg: WireMessage) -> None:
        self._outbox.append(msg.encode())

    def await_reply(self) -> WireMessage:
        frames = b"".join(self._outbox)
        self._outbox = []
        reply = receive_and_deploy(self.slave, iter_frames(frames))
        if reply is None:
            raise TruncatedStream("slave returned no reply")
        return decode(reply.encode())

    def close(self) -> None:
        self._outbox = []


class SocketLink:
    """TCP link to a :class:`SlaveServer`."""

    def __init__(self, address: tuple[str, int], timeout: float = 30.0):
        self.address = address
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._rfile = None

    def open(self) -> None:
        self._sock = socket.create_connection(self.address, timeout=self.timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._rfile = self._sock.makefile("rb")

    def send(self, msg: WireMessage) -> None:
        self._sock.sendall(msg.encode())

    def await_reply(self) -> WireMessage:
        reply = read_message(self._rfile)
        if reply is None:
            raise TruncatedStream("slave closed the connection without replying")
        return reply

    def close(self) -> None:
        if self._sock is None:
            return
        try:
            self._rfile.close()
            self._sock.close()
        finally:
            self._sock = None
            self._rfile = None


class _SlaveHandler(socketserver.StreamRequestHandler):
    def handle(self):
        slave: SlaveStack = self.server.slave
        try:
            reply = receive_and_deploy(slave, read_messages(self.rfile))
            if reply is None:
                return
            self.wfile.write(reply.encode())
            self.wfile.flush()
            closing = read_message(self.rfile)
            if closing is not None and closing.kind is not Kind.ACK_200:
                log.warning("%s: expected ack-200, got %s", slave.node_id, closing.kind.label)
        except (OSError, QkdNfvError) as exc:
            log.warning("%s: connection dropped: %s", slave.node_id, exc)


class SlaveServer(socketserver.ThreadingTCPServer):
    """Serve one slave stack on a localhost TCP port in a background thread."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, slave: SlaveStack, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _SlaveHandler)
        self.slave = slave
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "SlaveServer":
        self._thread = threading.Thread(target=self.serve_forever, kwargs={"poll_interval": 0.05},
                                        name=f"slave-{self.slave.node_id}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


Tamper = Callable[[int, bytes], bytes]


class Orchestrator:
    """Master node: owns the catalog, the Alice key store and the switch."""

    def __init__(self, alice_node: str, alice_store: KeyStore, switch: OpticalSwitch, clock,
                 links: dict, *, trace: Optional[Trace] = None, catalog=None,
                 mode: CipherMode = CipherMode.AES256, block_bits: int = DEFAULT_BLOCK_BITS,
                 nonce_source: Callable[[], bytes] = random_nonce):
        self.alice_node = alice_node
        self.alice_store = alice_store
        self.switch = switch
        self.clock = clock
        self.links = links
        self.trace = trace if trace is not None else Trace()
        self.catalog: dict[str, VnfImage] = dict(catalog or {})
        self.mode = mode
        self.block_bits = block_bits
        self.nonce_source = nonce_source
        self._job_ids = itertools.count(1)

    def add_image(self, image: VnfImage) -> None:
        self.catalog[image.image_id] = image

    def key_bits_for(self, image_id: str, mode: Optional[CipherMode] = None) -> int:
        return key_bits_needed(mode or self.mode, self.catalog[image_id].size, self.block_bits)

    def _send(self, link, msg: WireMessage, dest: str, job: str) -> None:
        self.trace.record(self.clock.now, f"orch->{dest}", msg.kind.label, msg.size, job)
        link.send(msg)

    def transfer_image(self, image_id: str, dest: str, *, mode: Optional[CipherMode] = None,
                       tamper: Optional[Tamper] = None) -> TransferJob:
        mode = mode or self.mode
        job = TransferJob(f"job-{next(self._job_ids):04d}", image_id, dest, mode)
        jid = job.job_id
        clock = self.clock
        t_start = clock.now
        link = self.links.get(dest)
        path: Optional[Path] = None
        opened = False
        try:
            image = self.catalog.get(image_id)
            if image is None:
                raise TransferError(f"image {image_id} is not in the catalog")
            if link is None:
                raise TransferError(f"no slave stack at {dest}")
            link.open()
            opened = True
            self._send(link, WireMessage.control(
                Kind.TRANSFER_INIT, job=jid, image_id=image.image_id, name=image.name,
                size=image.size, checksum=image.checksum.hex(), mode=mode.value), dest, jid)

            t = clock.now
            path = self.switch.compute_path(self.alice_node, dest, "classical")
            self.switch.establish_path(path, clock, self.trace, jid)
            job.timings["path_setup"] = clock.now - t
            job.advance("path-setup")

            t = clock.now
            key = request_key(self.alice_store, key_bits_needed(mode, image.size, self.block_bits),
                              dest, clock=clock, trace=self.trace, job=jid)
            job.key_id = key.hex_id
            job.timings["key"] = clock.now - t
            job.advance("key-obtained")

            payload, job.timings["encrypt"] = clock.timed(
                "encrypt", image.size, lambda: encrypt(image.payload, key, mode, self.nonce_source))
            job.advance("encrypted")

            data = payload.to_bytes()
            send_s = 0.0
            for index, start in enumerate(range(0, len(data), MAX_CHUNK)):
                body = data[start:start + MAX_CHUNK]
                msg = WireMessage(Kind.IMAGE_CHUNK, body)
                self.trace.record(clock.now, f"orch->{dest}", msg.kind.label, msg.size, jid)
                if tamper is not None:
                    msg = WireMessage(Kind.IMAGE_CHUNK, tamper(index, body))
                _, dt = clock.timed("send", len(body), lambda: link.send(msg))
                send_s += dt
            job.bytes_sent = len(data)
            job.timings["send"] = send_s
            job.advance("transferring")

            self._send(link, WireMessage.control(Kind.KEY_ID_NOTIFY, job=jid, image_id=image.image_id,
                                                 key_id=payload.key_id.hex()), dest, jid)
            job.advance("notified")

            reply = link.await_reply()
            self.trace.record(clock.now, f"{dest}->orch", reply.kind.label, reply.size, jid)
            fields = reply.fields()
            if reply.kind is Kind.NACK:
                job.fail(fields.get("reason", "nack"), fields.get("stage"))
                return job
            if reply.kind is not Kind.DEPLOY_REPORT or fields.get("checksum") != image.checksum.hex():
                raise ProtocolError(f"unexpected reply {reply.kind.label}")
            job.timings["decrypt"] = float(fields["decrypt_s"])
            job.advance("decrypted")
            job.advance("deployed")

            self._send(link, WireMessage.control(Kind.ACK_200, job=jid, status=200), dest, jid)
            job.advance("acked")
            return job
        except (QkdNfvError, OSError) as exc:
            reason = getattr(exc, "reason", "io-error")
            log.info("job %s failed before %s: %s", jid, job.next_state, exc)
            job.fail(reason)
            if opened:
                try:
                    self._send(link, nack(jid, reason, job.failed_at), dest, jid)
                except OSError:
                    pass
            return job
        finally:
            job.timings["total"] = clock.now - t_start
            if opened:
                link.close()
            if path is not None and self.switch.is_established(path):
                # housekeeping after the job closes; not part of the job's own exchange
                self.switch.teardown_path(path, clock, self.trace, NO_JOB)
