import io

import pytest

from qkdnfv.errors import ProtocolError, TruncatedStream
from qkdnfv.wire import (MAX_CHUNK, WORKFLOW_KINDS, Kind, WireMessage, decode, decode_prefix, iter_frames,
                         read_messages)


def test_frame_layout():
    msg = WireMessage(Kind.IMAGE_CHUNK, b"abc")
    assert msg.encode() == b"\x00\x00\x00\x03\x05abc"
    assert msg.size == 8
    assert decode(msg.encode()) == msg


def test_control_body_is_sorted_compact_json():
    msg = WireMessage.control(Kind.TRANSFER_INIT, size=5, image="x")
    assert msg.body == b'{"image":"x","size":5}'
    assert msg.fields() == {"image": "x", "size": 5}


def test_labels():
    assert [Kind(i).label for i in range(1, 9)] == list(WORKFLOW_KINDS)
    assert Kind.from_label("key-id-notify") is Kind.KEY_ID_NOTIFY


def test_stream_of_frames():
    msgs = [WireMessage.control(Kind.KEY_REQUEST, bits=256), WireMessage(Kind.IMAGE_CHUNK, bytes(MAX_CHUNK)),
            WireMessage(Kind.ACK_200, b"{}")]
    blob = b"".join(m.encode() for m in msgs)
    assert list(iter_frames(blob)) == msgs
    assert list(read_messages(io.BytesIO(blob))) == msgs


def test_chunk_limit():
    with pytest.raises(ProtocolError):
        WireMessage(Kind.IMAGE_CHUNK, bytes(MAX_CHUNK + 1))


@pytest.mark.parametrize("cut", [1, 4, 6, 9])
def test_truncation(cut):
    blob = WireMessage(Kind.IMAGE_CHUNK, b"abcdef").encode()[:cut]
    with pytest.raises(TruncatedStream):
        decode_prefix(blob)
    with pytest.raises(TruncatedStream):
        list(read_messages(io.BytesIO(blob)))


def test_unknown_kind_and_trailing_bytes():
    with pytest.raises(ProtocolError):
        decode(b"\x00\x00\x00\x00\x63")
    with pytest.raises(ProtocolError):
        decode(WireMessage(Kind.NACK).encode() + b"x")
    with pytest.raises(ProtocolError):
        WireMessage(Kind.NACK, b"\xff").fields()
