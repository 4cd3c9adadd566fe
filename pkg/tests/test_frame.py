import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorain.errors import DomainError, IntegrityError, LengthError
from lorain.frame import (
    DEFAULT_KEY,
    MHDR_CONFIRMED_UP,
    Frame,
    ack,
    compute_mic,
    decode_frame,
    encode_frame,
    get_attempt,
    set_attempt,
    uplink,
)

FIXTURES = Path(__file__).parent / "fixtures" / "golden_frames.json"

frames = st.builds(
    Frame,
    mhdr=st.sampled_from([0x40, 0x60, 0x80, 0xA0]),
    dev_addr=st.integers(0, 0xFFFFFFFF),
    fcnt=st.integers(0, 0xFFFF),
    fctrl=st.integers(0, 0xF0).map(lambda v: v & 0xF0),
    fopts=st.binary(max_size=15),
    payload=st.binary(max_size=64),
)


def test_minimal_ack_is_twelve_bytes():
    assert len(encode_frame(ack(1, 0))) == 12


@settings(max_examples=1000)
@given(frames)
def test_roundtrip(f):
    assert decode_frame(encode_frame(f)) == f


def test_every_bit_flip_breaks_the_mic():
    f = uplink(0x26000001, 42, b"\x00\x01payload")
    wire = encode_frame(f)
    body = wire[:-4]
    for i in range(len(body) * 8):
        mutated = bytearray(body)
        mutated[i // 8] ^= 1 << (i % 8)
        assert compute_mic(bytes(mutated), DEFAULT_KEY) != wire[-4:]
        with pytest.raises((IntegrityError, LengthError)):
            decode_frame(bytes(mutated) + wire[-4:])


def test_wrong_key_fails_integrity():
    wire = encode_frame(uplink(7, 1, b"x"), key=b"k" * 16)
    assert decode_frame(wire, key=b"k" * 16).payload == b"x"
    with pytest.raises(IntegrityError):
        decode_frame(wire, key=b"j" * 16)


def test_truncated_buffer():
    with pytest.raises(LengthError):
        decode_frame(bytes(11))


def test_attempt_bits():
    assert uplink(1, 0, b"").fopts[-1] & 0x07 == 0
    assert uplink(1, 0, b"", attempt=2).fopts[-1] & 0x07 == 1
    f = set_attempt(set_attempt(uplink(1, 0, b""), 5), 3)
    assert get_attempt(f) == 3
    with pytest.raises(DomainError):
        set_attempt(f, 9)


@given(st.binary(min_size=1, max_size=15), st.integers(1, 8))
def test_set_attempt_preserves_other_bits(opts, attempt):
    f = Frame(MHDR_CONFIRMED_UP, 1, 1, fopts=opts)
    g = set_attempt(f, attempt)
    assert get_attempt(g) == attempt
    assert g.fopts[:-1] == opts[:-1]
    assert g.fopts[-1] & 0xF8 == opts[-1] & 0xF8


def test_golden_mic():
    assert compute_mic(b"", bytes(16)).hex() == "b613679a"


def test_mic_is_keyed_and_deterministic():
    import random

    rnd = random.Random(1)
    for _ in range(100):
        data = rnd.randbytes(20)
        k1, k2 = rnd.randbytes(16), rnd.randbytes(16)
        assert compute_mic(data, k1) == compute_mic(data, k1)
        if k1 != k2:
            assert compute_mic(data, k1) != compute_mic(data, k2)


def test_golden_frame_corpus():
    for entry in json.loads(FIXTURES.read_text()):
        f = Frame(entry["mhdr"], entry["dev_addr"], entry["fcnt"], entry["fctrl"],
                  bytes.fromhex(entry["fopts"]), bytes.fromhex(entry["payload"]))
        assert encode_frame(f).hex() == entry["wire"], entry["name"]
        assert decode_frame(bytes.fromhex(entry["wire"])) == f
