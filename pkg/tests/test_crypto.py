import os
import struct

import pytest
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from hypothesis import given, settings
from hypothesis import strategies as st

from qkdnfv.clock import SimClock
from qkdnfv.crypto import (CipherMode, CounterNonces, EncryptedPayload, decrypt, encrypt, key_bits_needed,
                           open_payload, request_key, seal, xor_bytes)
from qkdnfv.errors import (InsufficientKeyMaterial, IntegrityFailure, KeyAlreadyConsumed, MalformedPayload,
                           OtpKeyTooShort, OtpLengthMismatch, UnknownKeyId)
from qkdnfv.session import KeyBlock, KeyStore, fetch_key_by_id
from qkdnfv.trace import Trace

AES, OTP = CipherMode.AES256, CipherMode.OTP


def xor_loop(plaintext, pad):
    out = bytearray(len(plaintext))
    for i in range(len(plaintext)):
        out[i] = plaintext[i] ^ pad[i]
    return bytes(out)


def stocked(nblocks=4, block_bits=256, seed=0):
    alice, bob = KeyStore("A"), KeyStore("B")
    alice.link(bob)
    rnd = __import__("random").Random(seed)
    for i in range(nblocks):
        block = KeyBlock(rnd.randbytes(16), rnd.randbytes(block_bits // 8), ("A", "B"), float(i))
        alice.deposit(block)
        bob.deposit(block)
    return alice, bob


class TestRequestKey:
    def test_256_from_512(self):
        alice, _ = stocked(2)
        key = request_key(alice, 256)
        assert key.length_bits == 256
        assert alice.available_bits == 256

    def test_too_much(self):
        alice, _ = stocked(1)
        with pytest.raises(InsufficientKeyMaterial):
            request_key(alice, 1024)

    def test_sequential_ids_differ(self):
        alice, _ = stocked(2)
        assert request_key(alice, 256).key_id != request_key(alice, 256).key_id

    def test_non_positive(self):
        alice, _ = stocked(1)
        with pytest.raises(ValueError):
            request_key(alice, 0)

    def test_exchange_is_traced(self):
        alice, _ = stocked(1)
        trace, clock = Trace(), SimClock(3.0)
        request_key(alice, 256, clock=clock, trace=trace, job="j")
        assert [(r.kind, r.job, r.t) for r in trace.records] == [("key-request", "j", 3.0),
                                                               ("key-response", "j", 3.0)]
        # response frame: 5-byte header, key id, 32 bytes of material
        assert trace.records[1].size == 5 + 16 + 32


class TestEncrypt:
    def test_otp_zero_plaintext_reveals_pad(self):
        alice, _ = stocked(1)
        key = request_key(alice, 256)
        p = encrypt(bytes(32), key, OTP)
        assert p.ciphertext == key.material

    def test_otp_key_too_short(self):
        alice, _ = stocked(1)
        key = request_key(alice, 256)
        with pytest.raises(OtpKeyTooShort):
            encrypt(bytes(100), key, OTP)

    def test_aes_roundtrip(self):
        alice, bob = stocked(1)
        key = request_key(alice, 256)
        p = encrypt(b"vnf image bytes", key, AES)
        assert decrypt(p, bob) == b"vnf image bytes"

    def test_aes_matches_reference_aead(self):
        alice, _ = stocked(1)
        key = request_key(alice, 256)
        nonce = bytes(range(12))
        p = encrypt(b"hello", key, AES, nonce_source=lambda: nonce)
        expected = AESGCM(key.material).encrypt(nonce, b"hello", b"\x01" + key.key_id)
        assert p.ciphertext + p.tag == expected

    def test_aes_needs_256_bits(self):
        key = KeyBlock(bytes(16), bytes(16), ("A", "B"), 0.0)
        with pytest.raises(ValueError):
            seal(b"x", key, AES)

    def test_key_encrypts_once(self):
        alice, _ = stocked(1)
        key = request_key(alice, 256)
        encrypt(b"a", key, AES)
        with pytest.raises(KeyAlreadyConsumed):
            encrypt(b"b", key, AES)
        # and the sender store will not hand it out again
        with pytest.raises(KeyAlreadyConsumed):
            fetch_key_by_id(alice, key.key_id)

    def test_key_bits_needed(self):
        assert key_bits_needed(AES, 10 ** 9, 256) == 256
        assert key_bits_needed(OTP, 100, 256) == 1024
        assert key_bits_needed(OTP, 32, 256) == 256
        assert key_bits_needed(OTP, 0, 256) == 256


class TestDecrypt:
    def test_unknown_key(self):
        alice, _ = stocked(1)
        p = encrypt(b"x", request_key(alice, 256), AES)
        with pytest.raises(UnknownKeyId):
            decrypt(p, KeyStore("elsewhere"))

    def test_receiver_fetches_once(self):
        alice, bob = stocked(1)
        p = encrypt(b"x" * 10, request_key(alice, 256), OTP)
        decrypt(p, bob)
        with pytest.raises(KeyAlreadyConsumed):
            decrypt(p, bob)

    def test_otp_length_mismatch(self):
        alice, bob = stocked(1)
        p = encrypt(b"abc", request_key(alice, 256), OTP)
        bad = EncryptedPayload(OTP, p.key_id, p.ciphertext[:2], plaintext_length=3)
        with pytest.raises(OtpLengthMismatch):
            decrypt(bad, bob)

    def test_single_bit_flip_under_aes(self):
        alice, bob = stocked(1)
        p = encrypt(b"payload", request_key(alice, 256), AES)
        flipped = bytes([p.ciphertext[0] ^ 1]) + p.ciphertext[1:]
        with pytest.raises(IntegrityFailure):
            decrypt(EncryptedPayload(AES, p.key_id, flipped, nonce=p.nonce, tag=p.tag), bob)


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=2048), st.sampled_from([AES, OTP]))
def test_roundtrip_both_modes(data, mode):
    alice, bob = stocked(70)
    key = request_key(alice, key_bits_needed(mode, len(data), 256))
    payload = encrypt(data, key, mode)
    wire = payload.to_bytes()
    assert decrypt(EncryptedPayload.from_bytes(wire), bob) == data


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=512))
def test_otp_matches_xor_loop(data):
    alice, _ = stocked(17)
    key = request_key(alice, key_bits_needed(OTP, len(data), 256))
    assert encrypt(data, key, OTP).ciphertext == xor_loop(data, key.material)


def test_xor_bytes_edges():
    assert xor_bytes(b"", b"") == b""
    assert xor_bytes(b"\x0f\xf0", b"\xff\xff\x00") == b"\xf0\x0f"


def test_aes_tamper_at_sampled_positions():
    alice, bob = stocked(1)
    key = request_key(alice, 256)
    payload = seal(os.urandom(300), key, AES)
    bob_key = bob.blocks[key.key_id]
    fields = {"nonce": payload.nonce, "ciphertext": payload.ciphertext, "tag": payload.tag}
    for name, value in fields.items():
        for bit in (0, 7, 8 * len(value) // 2 + 3, 8 * len(value) - 1):
            mutated = bytearray(value)
            mutated[bit // 8] ^= 1 << (bit % 8)
            bad = EncryptedPayload(AES, payload.key_id, **{**fields, name: bytes(mutated)})
            with pytest.raises(IntegrityFailure):
                open_payload(bad, bob_key)
    assert len(open_payload(payload, bob_key)) == 300


def test_counter_nonces_unique_and_prefixed():
    src = CounterNonces(b"\xaa\xbb\xcc\xdd")
    seen = {src() for _ in range(5000)}
    assert len(seen) == 5000
    assert all(n[:4] == b"\xaa\xbb\xcc\xdd" and len(n) == 12 for n in seen)
    with pytest.raises(ValueError):
        CounterNonces(b"\x00")


class TestSerialization:
    def test_aes_layout(self):
        kid, nonce, tag = bytes(range(16)), bytes(range(100, 112)), b"\xee" * 16
        p = EncryptedPayload(AES, kid, b"CT!", nonce=nonce, tag=tag)
        assert p.to_bytes() == b"\x01" + kid + nonce + struct.pack(">Q", 3) + b"CT!" + tag
        assert EncryptedPayload.from_bytes(p.to_bytes()) == p

    def test_otp_layout(self):
        kid = b"\x07" * 16
        p = EncryptedPayload(OTP, kid, b"\x01\x02", plaintext_length=2)
        assert p.to_bytes() == b"\x02" + kid + b"\x00" * 7 + b"\x02" + b"\x01\x02"
        assert EncryptedPayload.from_bytes(p.to_bytes()) == p

    @pytest.mark.parametrize("blob", [b"", b"\x01" + bytes(20), b"\x03" + bytes(40),
                                      b"\x01" + bytes(16) + bytes(12) + struct.pack(">Q", 99) + bytes(16)])
    def test_malformed(self, blob):
        with pytest.raises(MalformedPayload):
            EncryptedPayload.from_bytes(blob)

    def test_field_invariants(self):
        kid = bytes(16)
        with pytest.raises(MalformedPayload):
            EncryptedPayload(AES, kid, b"", nonce=bytes(12))
        with pytest.raises(MalformedPayload):
            EncryptedPayload(AES, kid, b"", nonce=bytes(12), tag=bytes(16), plaintext_length=0)
        with pytest.raises(MalformedPayload):
            EncryptedPayload(OTP, kid, b"", nonce=bytes(12), plaintext_length=0)
        with pytest.raises(MalformedPayload):
            EncryptedPayload(OTP, kid, b"")
        with pytest.raises(MalformedPayload):
            EncryptedPayload(OTP, bytes(3), b"", plaintext_length=0)
