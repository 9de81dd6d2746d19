"""Wire codec tests: exact byte format, round trips, resynchronization."""

import pytest
from hypothesis import given, settings, strategies as st

from teleprobe.protocol import (
    Ack,
    Cmd,
    Error,
    FrameError,
    Heartbeat,
    Hello,
    Imu,
    LineAssembler,
    decode,
    encode,
)


def test_cmd_exact_bytes():
    frame = Cmd(axis="LR", dir=1, on=True, seq=7, ts_ms=100)
    assert encode(frame) == b'{"t":"cmd","axis":"LR","dir":1,"on":true,"seq":7,"ts_ms":100}\n'


def test_heartbeat_exact_bytes():
    assert encode(Heartbeat(seq=1, ts_ms=0)) == b'{"t":"hb","seq":1,"ts_ms":0}\n'


def test_decode_valid_cmd():
    f = decode(b'{"t":"cmd","axis":"UD","dir":-1,"on":false,"seq":9,"ts_ms":55}')
    assert f == Cmd(axis="UD", dir=-1, on=False, seq=9, ts_ms=55)


def test_decode_ignores_unknown_fields():
    f = decode(b'{"t":"hb","seq":3,"ts_ms":10,"future":"stuff"}')
    assert f == Heartbeat(seq=3, ts_ms=10)


@pytest.mark.parametrize("line,code", [
    (b'{"t":"cmd","axis":"XX","dir":1,"on":true,"seq":1,"ts_ms":0}', "bad_enum"),
    (b'{"t":"cmd","axis":"LR","dir":2,"on":true,"seq":1,"ts_ms":0}', "bad_enum"),
    (b'{"t":"cmd","axis":"LR","dir":1,"seq":1,"ts_ms":0}', "missing_field"),
    (b'{"t":"cmd","axis":"LR","dir":1,"on":"yes","seq":1,"ts_ms":0}', "bad_value"),
    (b'{"t":"nope","x":1}', "unknown_type"),
    (b'{"axis":"LR"}', "missing_field"),
    (b'{"t":"hello","role":"admin","session":"s","proto_version":1}', "bad_enum"),
    (b'not json at all', "parse"),
    (b'[1,2,3]', "parse"),
])
def test_decode_error_codes(line, code):
    with pytest.raises(FrameError) as ei:
        decode(line)
    assert ei.value.code == code


def test_oversize_frame_rejected():
    with pytest.raises(FrameError) as ei:
        encode(Hello(role="operator", session="x" * 2000))
    assert ei.value.code == "oversize"


_frames = st.one_of(
    st.builds(Hello, role=st.sampled_from(["operator", "robot", "console"]),
              session=st.text(st.characters(codec="ascii", exclude_characters="\n\r\\\""),
                              max_size=32),
              proto_version=st.integers(0, 10)),
    st.builds(Cmd, axis=st.sampled_from(["TR", "RO", "LR", "UD"]),
              dir=st.sampled_from([-1, 1]), on=st.booleans(),
              seq=st.integers(0, 2**31), ts_ms=st.integers(0, 2**40)),
    st.builds(Imu,
              roll_deg=st.floats(-360, 360, allow_nan=False),
              pitch_deg=st.floats(-360, 360, allow_nan=False),
              yaw_deg=st.floats(-360, 360, allow_nan=False),
              seq=st.integers(0, 2**31), ts_ms=st.integers(0, 2**40)),
    st.builds(Heartbeat, seq=st.integers(0, 2**31), ts_ms=st.integers(0, 2**40)),
    st.builds(Ack, ack_seq=st.integers(0, 2**31), ts_ms=st.integers(0, 2**40)),
    st.builds(Error, code=st.sampled_from(["busy", "nosession", "version", "x"]),
              detail=st.text(st.characters(codec="ascii", exclude_characters="\n\r"),
                             max_size=64)),
)


@settings(max_examples=500, deadline=None)
@given(_frames)
def test_roundtrip_identity(frame):
    assert decode(encode(frame)) == frame


def test_resynchronization_after_corrupt_line():
    asm = LineAssembler()
    good1 = encode(Heartbeat(seq=1, ts_ms=5))
    good2 = encode(Cmd(axis="LR", dir=1, on=True, seq=2, ts_ms=9))
    stream = good1 + b'{"t":"cmd","axis' + b"\n" + good2
    out = list(asm.feed(stream))
    assert out[0] == Heartbeat(seq=1, ts_ms=5)
    assert isinstance(out[1], FrameError)
    assert out[2] == Cmd(axis="LR", dir=1, on=True, seq=2, ts_ms=9)


def test_assembler_handles_split_lines():
    asm = LineAssembler()
    data = encode(Heartbeat(seq=1, ts_ms=5))
    first = list(asm.feed(data[:10]))
    rest = list(asm.feed(data[10:]))
    assert first == []
    assert rest == [Heartbeat(seq=1, ts_ms=5)]
