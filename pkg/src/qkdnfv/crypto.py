"""Key request and the AES-256-GCM / one-time-pad payload ciphers.

Serialized payload::

    aes256: 0x01 | key_id(16) | nonce(12) | ct_len(8, BE) | ciphertext | tag(16)
    otp:    0x02 | key_id(16) | length(8, BE) | ciphertext

The mode byte and key id are bound into the AES tag as associated data.
"""
from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import (IntegrityFailure, KeyAlreadyConsumed, MalformedPayload, OtpKeyTooShort,
                     OtpLengthMismatch)
from .session import KEY_ID_BYTES, KeyBlock, KeyStore
from .wire import Kind, WireMessage

AES_KEY_BYTES = 32
NONCE_BYTES = 12
TAG_BYTES = 16
_LEN = struct.Struct(">Q")


class CipherMode(enum.Enum):
    AES256 = "aes256"
    OTP = "otp"

    @property
    def code(self) -> int:
        return 1 if self is CipherMode.AES256 else 2

    @classmethod
    def from_code(cls, code: int) -> "CipherMode":
        try:
            return {1: cls.AES256, 2: cls.OTP}[code]
        except KeyError:
            raise MalformedPayload(f"unknown cipher mode byte {code}") from None


def key_bits_needed(mode: CipherMode, payload_bytes: int, block_bits: int) -> int:
    """Key bits to reserve: one AES key, or the payload rounded up to whole blocks."""
    if mode is CipherMode.AES256:
        return 8 * AES_KEY_BYTES
    bits = 8 * payload_bytes
    return max(block_bits, -(-bits // block_bits) * block_bits)


@dataclass(frozen=True)
class EncryptedPayload:
    mode: CipherMode
    key_id: bytes
    ciphertext: bytes
    nonce: Optional[bytes] = None
    tag: Optional[bytes] = None
    plaintext_length: Optional[int] = None

    def __post_init__(self):
        if len(self.key_id) != KEY_ID_BYTES:
            raise MalformedPayload(f"key id must be {KEY_ID_BYTES} bytes")
        if self.mode is CipherMode.AES256:
            if self.nonce is None or len(self.nonce) != NONCE_BYTES:
                raise MalformedPayload("aes256 payload needs a 96-bit nonce")
            if self.tag is None or len(self.tag) != TAG_BYTES:
                raise MalformedPayload("aes256 payload needs a 128-bit tag")
            if self.plaintext_length is not None:
                raise MalformedPayload("aes256 payload carries no plaintext length")
        else:
            if self.nonce is not None or self.tag is not None:
                raise MalformedPayload("otp payload carries no nonce or tag")
            if self.plaintext_length is None:
                raise MalformedPayload("otp payload needs its plaintext length")

    def to_bytes(self) -> bytes:
        head = bytes([self.mode.code]) + self.key_id
        if self.mode is CipherMode.AES256:
            return head + self.nonce + _LEN.pack(len(self.ciphertext)) + self.ciphertext + self.tag
        return head + _LEN.pack(self.plaintext_length) + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncryptedPayload":
        data = bytes(data)
        if len(data) < 1 + KEY_ID_BYTES + _LEN.size:
            raise MalformedPayload("payload shorter than its header")
        mode = CipherMode.from_code(data[0])
        key_id = data[1:1 + KEY_ID_BYTES]
        pos = 1 + KEY_ID_BYTES
        if mode is CipherMode.AES256:
            nonce = data[pos:pos + NONCE_BYTES]
            pos += NONCE_BYTES
            if len(data) < pos + _LEN.size:
                raise MalformedPayload("payload shorter than its header")
            (n,) = _LEN.unpack_from(data, pos)
            pos += _LEN.size
            if len(data) != pos + n + TAG_BYTES:
                raise MalformedPayload(f"declared {n} ciphertext bytes, frame holds {len(data) - pos - TAG_BYTES}")
            return cls(mode, key_id, data[pos:pos + n], nonce=nonce, tag=data[pos + n:])
        (n,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        return cls(mode, key_id, data[pos:], plaintext_length=n)


class CounterNonces:
    """Deterministic unique nonces: 4-byte prefix followed by a 64-bit counter."""

    def __init__(self, prefix: bytes = b"\x00" * 4):
        if len(prefix) != 4:
            raise ValueError("nonce prefix must be 4 bytes")
        self.prefix = prefix
        self.counter = 0

    def __call__(self) -> bytes:
        self.counter += 1
        return self.prefix + self.counter.to_bytes(8, "big")


def random_nonce() -> bytes:
    return os.urandom(NONCE_BYTES)


def xor_bytes(data: bytes, pad: bytes) -> bytes:
    a = np.frombuffer(data, dtype=np.uint8)
    b = np.frombuffer(pad, dtype=np.uint8, count=len(data))
    return np.bitwise_xor(a, b).tobytes()


def _aad(mode: CipherMode, key_id: bytes) -> bytes:
    return bytes([mode.code]) + key_id


def seal(plaintext: bytes, key: KeyBlock, mode: CipherMode,
         nonce_source: Callable[[], bytes] = random_nonce) -> EncryptedPayload:
    """Encrypt without touching key bookkeeping."""
    if mode is CipherMode.AES256:
        if len(key.material) < AES_KEY_BYTES:
            raise ValueError(f"aes256 needs {8 * AES_KEY_BYTES} key bits, got {key.length_bits}")
        nonce = nonce_source()
        sealed = AESGCM(key.material[:AES_KEY_BYTES]).encrypt(nonce, plaintext, _aad(mode, key.key_id))
        return EncryptedPayload(mode, key.key_id, sealed[:-TAG_BYTES], nonce=nonce, tag=sealed[-TAG_BYTES:])
    if len(key.material) < len(plaintext):
        raise OtpKeyTooShort(f"{len(plaintext)}-byte plaintext, {len(key.material)}-byte pad")
    return EncryptedPayload(mode, key.key_id, xor_bytes(plaintext, key.material),
                            plaintext_length=len(plaintext))


def open_payload(payload: EncryptedPayload, key: KeyBlock) -> bytes:
    if payload.mode is CipherMode.AES256:
        aes = AESGCM(key.material[:AES_KEY_BYTES])
        try:
            return aes.decrypt(payload.nonce, payload.ciphertext + payload.tag,
                               _aad(payload.mode, payload.key_id))
        except InvalidTag:
            raise IntegrityFailure(f"tag mismatch under key {payload.key_id.hex()}") from None
    if payload.plaintext_length != len(payload.ciphertext):
        raise OtpLengthMismatch(
            f"header says {payload.plaintext_length} bytes, ciphertext has {len(payload.ciphertext)}")
    if len(key.material) < len(payload.ciphertext):
        raise OtpLengthMismatch(f"pad of {len(key.material)} bytes for {len(payload.ciphertext)} bytes")
    return xor_bytes(payload.ciphertext, key.material)


def encrypt(plaintext: bytes, key: KeyBlock, mode: CipherMode,
            nonce_source: Callable[[], bytes] = random_nonce) -> EncryptedPayload:
    """Encrypt under a reserved key; each handed-out key encrypts once."""
    if key.used:
        raise KeyAlreadyConsumed(f"key {key.hex_id} was already used to encrypt")
    payload = seal(plaintext, key, mode, nonce_source)
    key.used = True
    return payload


def decrypt(payload: EncryptedPayload, store: KeyStore) -> bytes:
    """Fetch the key named in ``payload`` from the receiver's store and decrypt.

    The key is consumed even when decryption fails.
    """
    key = store.fetch(payload.key_id)
    return open_payload(payload, key)


def request_key(alice_store: KeyStore, length_bits: int, peer: Optional[str] = None,
                *, clock=None, trace=None, job=None) -> KeyBlock:
    """Ask the Alice key server for key material; logs the request/response pair."""
    if length_bits <= 0:
        raise ValueError("length_bits must be positive")
    direction = f"{alice_store.owner}-keyserver"
    req = WireMessage.control(Kind.KEY_REQUEST, bits=length_bits, peer=peer)
    if trace is not None:
        trace.record(clock.now if clock else 0.0, f"orch->{direction}", "key-request", req.size, job)
    key = alice_store.reserve(length_bits, peer)
    if trace is not None:
        resp = WireMessage(Kind.KEY_RESPONSE, key.key_id + key.material)
        trace.record(clock.now if clock else 0.0, f"{direction}->orch", "key-response", resp.size, job)
    return key
