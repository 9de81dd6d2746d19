"""Newline-delimited JSON wire protocol for operator, robot, and relay.

One frame per line, UTF-8, terminated by ``\\n``, discriminated by the
``"t"`` field.  The format is identical over TCP streams and WebSocket
text messages, which keeps logs diffable and lets a browser console speak
the protocol verbatim.  Unknown top-level fields are ignored on decode for
forward compatibility; a corrupted line never affects the lines after it.

Commands are edge events: every press and release is its own frame and
frames are never coalesced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

PROTO_VERSION = 1
MAX_FRAME_BYTES = 1024

AXIS_CODES = ("TR", "RO", "LR", "UD")
ROLES = ("operator", "robot", "console")


class FrameError(ValueError):
    """Protocol violation with a stable error code."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class Hello:
    role: str
    session: str
    proto_version: int = PROTO_VERSION


@dataclass(frozen=True)
class Cmd:
    axis: str
    dir: int
    on: bool
    seq: int
    ts_ms: int


@dataclass(frozen=True)
class Imu:
    roll_deg: float
    pitch_deg: float
    yaw_deg: float
    seq: int
    ts_ms: int


@dataclass(frozen=True)
class Heartbeat:
    seq: int
    ts_ms: int


@dataclass(frozen=True)
class Ack:
    ack_seq: int
    ts_ms: int


@dataclass(frozen=True)
class Error:
    code: str
    detail: str = ""


Frame = Union[Hello, Cmd, Imu, Heartbeat, Ack, Error]

_TAGS = {Hello: "hello", Cmd: "cmd", Imu: "imu", Heartbeat: "hb",
         Ack: "ack", Error: "err"}


def encode(frame: Frame) -> bytes:
    """Serialize one frame to a single NDJSON line."""
    if isinstance(frame, Hello):
        obj = {"t": "hello", "role": frame.role, "session": frame.session,
               "proto_version": frame.proto_version}
    elif isinstance(frame, Cmd):
        obj = {"t": "cmd", "axis": frame.axis, "dir": frame.dir,
               "on": frame.on, "seq": frame.seq, "ts_ms": frame.ts_ms}
    elif isinstance(frame, Imu):
        obj = {"t": "imu", "roll_deg": frame.roll_deg,
               "pitch_deg": frame.pitch_deg, "yaw_deg": frame.yaw_deg,
               "seq": frame.seq, "ts_ms": frame.ts_ms}
    elif isinstance(frame, Heartbeat):
        obj = {"t": "hb", "seq": frame.seq, "ts_ms": frame.ts_ms}
    elif isinstance(frame, Ack):
        obj = {"t": "ack", "ack_seq": frame.ack_seq, "ts_ms": frame.ts_ms}
    elif isinstance(frame, Error):
        obj = {"t": "err", "code": frame.code, "detail": frame.detail}
    else:
        raise FrameError("bad_frame", f"not a frame: {type(frame).__name__}")
    line = json.dumps(obj, separators=(",", ":")).encode() + b"\n"
    if len(line) > MAX_FRAME_BYTES:
        raise FrameError("oversize", f"{len(line)} bytes > {MAX_FRAME_BYTES}")
    return line


def _req(obj: dict, key: str, kinds, what: str):
    if key not in obj:
        raise FrameError("missing_field", f"{what} needs {key!r}")
    val = obj[key]
    if kinds is bool:
        if not isinstance(val, bool):
            raise FrameError("bad_value", f"{what}.{key} must be boolean")
    elif kinds is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise FrameError("bad_value", f"{what}.{key} must be integer")
    elif kinds is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise FrameError("bad_value", f"{what}.{key} must be numeric")
        val = float(val)
    elif kinds is str:
        if not isinstance(val, str):
            raise FrameError("bad_value", f"{what}.{key} must be string")
    return val


def decode(line: bytes | str) -> Frame:
    """Parse one line into a frame, ignoring unknown fields."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError("parse", str(exc)) from exc
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameError("parse", str(exc)) from exc
    if not isinstance(obj, dict):
        raise FrameError("parse", "frame must be a JSON object")
    tag = obj.get("t")
    if tag == "cmd":
        axis = _req(obj, "axis", str, "cmd")
        if axis not in AXIS_CODES:
            raise FrameError("bad_enum", f"unknown axis {axis!r}")
        direction = _req(obj, "dir", int, "cmd")
        if direction not in (-1, 1):
            raise FrameError("bad_enum", f"dir must be -1 or 1, got {direction}")
        return Cmd(axis=axis, dir=direction, on=_req(obj, "on", bool, "cmd"),
                   seq=_req(obj, "seq", int, "cmd"),
                   ts_ms=_req(obj, "ts_ms", int, "cmd"))
    if tag == "imu":
        return Imu(roll_deg=_req(obj, "roll_deg", float, "imu"),
                   pitch_deg=_req(obj, "pitch_deg", float, "imu"),
                   yaw_deg=_req(obj, "yaw_deg", float, "imu"),
                   seq=_req(obj, "seq", int, "imu"),
                   ts_ms=_req(obj, "ts_ms", int, "imu"))
    if tag == "hb":
        return Heartbeat(seq=_req(obj, "seq", int, "hb"),
                         ts_ms=_req(obj, "ts_ms", int, "hb"))
    if tag == "ack":
        return Ack(ack_seq=_req(obj, "ack_seq", int, "ack"),
                   ts_ms=_req(obj, "ts_ms", int, "ack"))
    if tag == "hello":
        role = _req(obj, "role", str, "hello")
        if role not in ROLES:
            raise FrameError("bad_enum", f"unknown role {role!r}")
        return Hello(role=role, session=_req(obj, "session", str, "hello"),
                     proto_version=_req(obj, "proto_version", int, "hello"))
    if tag == "err":
        return Error(code=_req(obj, "code", str, "err"),
                     detail=str(obj.get("detail", "")))
    if tag is None:
        raise FrameError("missing_field", "frame needs 't'")
    raise FrameError("unknown_type", f"unknown frame type {tag!r}")


class LineAssembler:
    """Splits a byte stream into lines and resynchronizes after bad input.

    ``feed`` yields decoded frames interleaved with FrameError instances for
    lines that failed; decoding always resumes at the next newline.
    """

    def __init__(self, max_buffer: int = 64 * 1024):
        self._buf = b""
        self._max = max_buffer

    def feed(self, data: bytes):
        self._buf += data
        while True:
            nl = self._buf.find(b"\n")
            if nl < 0:
                if len(self._buf) > self._max:
                    self._buf = b""
                    yield FrameError("parse", "line exceeds buffer limit")
                return
            line, self._buf = self._buf[:nl], self._buf[nl + 1:]
            if not line.strip():
                continue
            try:
                yield decode(line)
            except FrameError as exc:
                yield exc
