"""Framed binary protocol shared by every orchestration message.

Frame layout::

    +----------------+--------+-----------------+
    | length (4, BE) | kind 1 | body (length B) |
    +----------------+--------+-----------------+

``length`` counts the body only. Control bodies are compact UTF-8 JSON;
image chunks carry raw ciphertext bytes.
"""
from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator

from .errors import ProtocolError, TruncatedStream

HEADER = struct.Struct(">IB")
MAX_CHUNK = 64 * 1024
# Generous bound so a corrupted length field cannot trigger a huge read.
MAX_BODY = 16 * 1024 * 1024


class Kind(enum.IntEnum):
    TRANSFER_INIT = 1
    FLOW_MOD = 2
    KEY_REQUEST = 3
    KEY_RESPONSE = 4
    IMAGE_CHUNK = 5
    KEY_ID_NOTIFY = 6
    DEPLOY_REPORT = 7
    ACK_200 = 8
    NACK = 9

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")

    @classmethod
    def from_label(cls, label: str) -> "Kind":
        return cls[label.upper().replace("-", "_")]


WORKFLOW_KINDS = (
    "transfer-init", "flow-mod", "key-request", "key-response",
    "image-chunk", "key-id-notify", "deploy-report", "ack-200",
)


@dataclass(frozen=True)
class WireMessage:
    kind: Kind
    body: bytes = b""

    def __post_init__(self):
        if len(self.body) > MAX_BODY:
            raise ProtocolError(f"body of {len(self.body)} bytes exceeds frame limit")
        if self.kind is Kind.IMAGE_CHUNK and len(self.body) > MAX_CHUNK:
            raise ProtocolError(f"image chunk of {len(self.body)} bytes exceeds {MAX_CHUNK}")

    @classmethod
    def control(cls, kind: Kind, **fields) -> "WireMessage":
        body = json.dumps(fields, sort_keys=True, separators=(",", ":")).encode()
        return cls(kind, body)

    def fields(self) -> dict:
        try:
            return json.loads(self.body.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"{self.kind.label} body is not JSON") from exc

    def encode(self) -> bytes:
        return HEADER.pack(len(self.body), int(self.kind)) + self.body

    @property
    def size(self) -> int:
        return HEADER.size + len(self.body)


def _kind(code: int) -> Kind:
    try:
        return Kind(code)
    except ValueError:
        raise ProtocolError(f"unknown message kind {code}") from None


def decode(frame: bytes) -> WireMessage:
    """Decode exactly one frame."""
    msg, rest = decode_prefix(frame)
    if rest:
        raise ProtocolError(f"{len(rest)} trailing bytes after frame")
    return msg


def decode_prefix(buf: bytes) -> tuple[WireMessage, bytes]:
    if len(buf) < HEADER.size:
        raise TruncatedStream(f"{len(buf)} bytes is shorter than a frame header")
    length, code = HEADER.unpack_from(buf)
    if length > MAX_BODY:
        raise ProtocolError(f"frame length {length} exceeds limit")
    end = HEADER.size + length
    if len(buf) < end:
        raise TruncatedStream(f"frame declares {length} body bytes, {len(buf) - HEADER.size} present")
    return WireMessage(_kind(code), bytes(buf[HEADER.size:end])), buf[end:]


def iter_frames(buf: bytes) -> Iterator[WireMessage]:
    while buf:
        msg, buf = decode_prefix(buf)
        yield msg


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    data = stream.read(n)
    if data is None:
        data = b""
    while len(data) < n:
        more = stream.read(n - len(data))
        if not more:
            break
        data += more
    return data


def read_message(stream: BinaryIO) -> WireMessage | None:
    """Read one frame from a blocking stream; None on clean EOF."""
    head = _read_exact(stream, HEADER.size)
    if not head:
        return None
    if len(head) < HEADER.size:
        raise TruncatedStream("stream ended inside a frame header")
    length, code = HEADER.unpack(head)
    if length > MAX_BODY:
        raise ProtocolError(f"frame length {length} exceeds limit")
    body = _read_exact(stream, length)
    if len(body) < length:
        raise TruncatedStream(f"stream ended after {len(body)} of {length} body bytes")
    return WireMessage(_kind(code), body)


def read_messages(stream: BinaryIO) -> Iterator[WireMessage]:
    while True:
        msg = read_message(stream)
        if msg is None:
            return
        yield msg
