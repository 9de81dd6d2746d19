"""Robot, relay, and operator endpoints with virtual in-process links.

Endpoint logic is transport free: each endpoint consumes frames delivered
through a port and emits frames through ports, with all timing supplied by
an injected clock.  The same objects run under the deterministic virtual
clock (experiments, CI) or behind real sockets (interactive services).

Topologies
----------

Direct / access-point: the robot owns the listening side and exactly one
operator may hold the control slot; extra operators are turned away busy,
while consoles attach read-only and receive telemetry.

Relayed / station: the robot dials a relay and registers its session name.
Operators and consoles join the same session; the relay forwards frames in
FIFO order per direction, applying the configured impairment, and keeps
per-session counters.

Safety: commands and heartbeats feed a watchdog; if the link falls silent
for the timeout all four axes are switched off.  Disconnects trigger the
same stop immediately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .eventlog import EventLog
from .impairment import ImpairedChannel, ImpairmentModel
from .probe import TICK_MS, AxisId, ProbeSession
from .protocol import (
    PROTO_VERSION,
    Ack,
    Cmd,
    Error,
    Frame,
    Heartbeat,
    Hello,
    Imu,
)

AXIS_BY_CODE = {a.value: a for a in AxisId}

DEFAULT_ROBOT_PORT = 7332
DEFAULT_RELAY_PORT = 7400
DEFAULT_TELEMETRY_HZ = 25.0
DEFAULT_FAILSAFE_TIMEOUT_MS = 1500
HEARTBEAT_PERIOD_MS = 1000
RTT_TIMEOUT_MS = 3000


def quantize_up(t_ms: float, tick_ms: int = TICK_MS) -> int:
    """Next tick boundary at or after t_ms (absolute grid)."""
    q = int(t_ms // tick_ms) * tick_ms
    return q if q >= t_ms else q + tick_ms


class LinkPort:
    """One side of a frame link.  ``handler`` gets on_frame/on_disconnect."""

    def __init__(self, link: "VirtualLink", side: int, label: str):
        self._link = link
        self._side = side
        self.label = label
        self.handler = None
        self.closed = False

    def send(self, frame: Frame) -> None:
        if not self.closed:
            self._link.send_from(self._side, frame)

    def close(self) -> None:
        self._link.close()


class VirtualLink:
    """Bidirectional in-process link with per-direction impairment."""

    def __init__(self, clock, impair_a_to_b: ImpairmentModel | None = None,
                 impair_b_to_a: ImpairmentModel | None = None,
                 name: str = "link"):
        self.clock = clock
        self.name = name
        self.ports = (LinkPort(self, 0, name + ".a"),
                      LinkPort(self, 1, name + ".b"))
        self._chan = (ImpairedChannel(impair_a_to_b),
                      ImpairedChannel(impair_b_to_a))
        self.closed = False

    @property
    def a(self) -> LinkPort:
        return self.ports[0]

    @property
    def b(self) -> LinkPort:
        return self.ports[1]

    def send_from(self, side: int, frame: Frame) -> None:
        if self.closed:
            return
        when = self._chan[side].schedule(self.clock.now_ms, frame)
        if when is None:
            return
        dest = self.ports[1 - side]
        self.clock.call_at(when, self._deliver, dest, frame)

    def _deliver(self, dest: LinkPort, frame: Frame) -> None:
        if dest.handler is not None:
            dest.handler.on_frame(dest, frame)

    def close(self) -> None:
        """Stop new sends; in-flight frames drain before the disconnect."""
        if self.closed:
            return
        self.closed = True
        drain_ms = max(self.clock.now_ms,
                       self._chan[0].last_dispatch_ms,
                       self._chan[1].last_dispatch_ms)
        for port in self.ports:
            port.closed = True
            if port.handler is not None:
                self.clock.call_at(drain_ms, port.handler.on_disconnect, port)


def connect(clock, handler_a, handler_b,
            impair_a_to_b: ImpairmentModel | None = None,
            impair_b_to_a: ImpairmentModel | None = None,
            name: str = "link") -> tuple[LinkPort, LinkPort]:
    """Wire two endpoints together; returns their ports (a, b)."""
    link = VirtualLink(clock, impair_a_to_b, impair_b_to_a, name)
    link.a.handler = handler_a
    link.b.handler = handler_b
    handler_a.attach(link.a)
    handler_b.attach(link.b)
    return link.a, link.b


@dataclass
class LinkStats:
    frames_forwarded: int = 0
    frames_dropped: int = 0
    rtt_ms: list[float] = field(default_factory=list)
    rtt_lost: int = 0


class RobotEndpoint:
    """The robot side: applies commands to the plant, emits telemetry.

    mode "ap": every attached port is a client (operator or console).
    mode "sta": a single upstream port leads to the relay.
    """

    def __init__(self, clock, probe: ProbeSession, *, mode: str = "ap",
                 session: str = "", telemetry_hz: float = DEFAULT_TELEMETRY_HZ,
                 failsafe_timeout_ms: int = DEFAULT_FAILSAFE_TIMEOUT_MS,
                 tick_ms: int = TICK_MS, log: EventLog | None = None,
                 record_trajectory: bool = False):
        if mode not in ("ap", "sta"):
            raise ValueError("mode must be 'ap' or 'sta'")
        self.clock = clock
        self.probe = probe
        self.mode = mode
        self.session = session
        self.tick_ms = tick_ms
        self.failsafe_timeout_ms = failsafe_timeout_ms
        self.telemetry_period_ms = max(
            tick_ms, quantize_up(1000.0 / telemetry_hz, tick_ms))
        self.log = log or EventLog()
        self.roles: dict[LinkPort, str] = {}
        self.operator_port: LinkPort | None = None
        self._seq = 0
        self._last_rx_ms: float | None = None
        self._watchdog: object | None = None
        self._telemetry_timer = None
        self.record_trajectory = record_trajectory
        self.trajectory: list[tuple] = []
        self.applied_commands: list[tuple] = []

    # ------------------------------------------------------------ plumbing

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def attach(self, port: LinkPort) -> None:
        self.roles[port] = ""
        if self.mode == "sta":
            self.operator_port = port  # command source is the relay
            port.send(Hello(role="robot", session=self.session))
            self._ensure_telemetry()

    def _clients(self) -> list[LinkPort]:
        return [p for p in self.roles if not p.closed]

    def _telemetry_targets(self) -> list[LinkPort]:
        if self.mode == "sta":
            return [self.operator_port] if self.operator_port else []
        return [p for p, role in self.roles.items()
                if role in ("operator", "console") and not p.closed]

    # -------------------------------------------------------------- frames

    def on_frame(self, port: LinkPort, frame: Frame) -> None:
        if isinstance(frame, Hello):
            self._on_hello(port, frame)
        elif isinstance(frame, Cmd):
            self._on_cmd(port, frame)
        elif isinstance(frame, Heartbeat):
            self._touch_rx()
            port.send(Ack(ack_seq=frame.seq, ts_ms=int(self.clock.now_ms)))
        elif isinstance(frame, Error):
            self.log.log(self.clock.now_ms, "peer_error", code=frame.code,
                         detail=frame.detail)

    def _on_hello(self, port: LinkPort, hello: Hello) -> None:
        if hello.proto_version != PROTO_VERSION:
            port.send(Error(code="version",
                            detail=f"expected {PROTO_VERSION}"))
            port.close()
            return
        if self.mode == "sta":
            # relayed operator presence; command slot managed by the relay
            self._touch_rx()
            return
        if hello.role == "operator":
            if self.operator_port is not None and not self.operator_port.closed:
                self.log.log(self.clock.now_ms, "busy_reject", port=port.label)
                port.send(Error(code="busy", detail="operator slot taken"))
                port.close()
                return
            self.operator_port = port
            self.roles[port] = "operator"
            self._touch_rx()
        else:
            self.roles[port] = "console"
        port.send(Hello(role="robot", session=self.session))
        self.log.log(self.clock.now_ms, "client_attached",
                     role=self.roles[port], port=port.label)
        self._ensure_telemetry()

    def _on_cmd(self, port: LinkPort, cmd: Cmd) -> None:
        if self.mode == "ap" and self.roles.get(port) != "operator":
            port.send(Error(code="readonly", detail="console may not command"))
            return
        axis = AXIS_BY_CODE.get(cmd.axis)
        if axis is None:
            port.send(Error(code="bad_enum", detail=f"axis {cmd.axis!r}"))
            return
        self._touch_rx()
        when = quantize_up(self.clock.now_ms, self.tick_ms)
        self.clock.call_at(when, self._apply_cmd, axis, cmd.dir, cmd.on, cmd.seq)

    def _apply_cmd(self, axis: AxisId, direction: int, on: bool, seq: int) -> None:
        t = int(self.clock.now_ms)
        self.probe.advance_to(t)
        slack = None
        if on and axis in (AxisId.STEER_LR, AxisId.STEER_UD):
            slack = self.probe.slack_steps(axis, direction)
        self.probe.apply(axis, direction, on)
        self.applied_commands.append((t, seq, axis.value, direction, on, slack))
        if self.record_trajectory:
            self.trajectory.append(("cmd", self.probe.snapshot()))

    # ----------------------------------------------------------- telemetry

    def _ensure_telemetry(self) -> None:
        if self._telemetry_timer is None:
            when = quantize_up(self.clock.now_ms, self.telemetry_period_ms)
            self._telemetry_timer = self.clock.call_at(when, self._telemetry_tick)

    def _telemetry_tick(self) -> None:
        targets = self._telemetry_targets()
        if not targets:
            self._telemetry_timer = None
            return
        t = int(self.clock.now_ms)
        self.probe.advance_to(t)
        reading = self.probe.sample_imu()
        frame = Imu(roll_deg=reading.roll_deg, pitch_deg=reading.pitch_deg,
                    yaw_deg=reading.yaw_deg, seq=reading.seq, ts_ms=reading.ts_ms)
        for port in targets:
            port.send(frame)
        if self.record_trajectory:
            self.trajectory.append(("imu", self.probe.snapshot()))
        self._telemetry_timer = self.clock.call_at(
            self.clock.now_ms + self.telemetry_period_ms, self._telemetry_tick)

    # ------------------------------------------------------------ failsafe

    def _touch_rx(self) -> None:
        self._last_rx_ms = self.clock.now_ms
        if self._watchdog is None:
            self._arm_watchdog()

    def _arm_watchdog(self) -> None:
        deadline = quantize_up(self._last_rx_ms + self.failsafe_timeout_ms,
                               self.tick_ms)
        self._watchdog = self.clock.call_at(deadline, self._watchdog_fire)

    def _watchdog_fire(self) -> None:
        self._watchdog = None
        if self._last_rx_ms is None:
            return
        if self.clock.now_ms - self._last_rx_ms >= self.failsafe_timeout_ms:
            self._failsafe("timeout")
        else:
            self._arm_watchdog()

    def _failsafe(self, reason: str) -> None:
        t = int(self.clock.now_ms)
        self.probe.advance_to(t)
        if self.probe.any_engaged():
            self.probe.all_off()
            if self.record_trajectory:
                self.trajectory.append(("failsafe", self.probe.snapshot()))
        self.log.log(self.clock.now_ms, "failsafe", reason=reason)
        self._last_rx_ms = None

    # ---------------------------------------------------------- disconnect

    def on_disconnect(self, port: LinkPort) -> None:
        role = self.roles.pop(port, "")
        if port is self.operator_port:
            self.operator_port = None
            self._failsafe("disconnect")
        self.log.log(self.clock.now_ms, "client_detached", role=role,
                     port=port.label)


@dataclass
class _Session:
    robot_port: LinkPort | None = None
    robot_hello: Hello | None = None
    operator_port: LinkPort | None = None
    console_ports: list[LinkPort] = field(default_factory=list)
    up: ImpairedChannel | None = None
    down: ImpairedChannel | None = None
    stats: LinkStats = field(default_factory=LinkStats)
    hb_sent_ms: dict[int, float] = field(default_factory=dict)


class RelayEndpoint:
    """Session-pairing cloud relay with per-direction impairment.

    A robot registers a session by name; operators and consoles join it.
    Frames from the operator travel "up" to the robot, frames from the
    robot travel "down"; each direction is FIFO and independently impaired.
    """

    def __init__(self, clock, impair_up: ImpairmentModel | None = None,
                 impair_down: ImpairmentModel | None = None,
                 log: EventLog | None = None):
        self.clock = clock
        self.impair_up = impair_up
        self.impair_down = impair_down
        self.log = log or EventLog()
        self.sessions: dict[str, _Session] = {}
        self._port_session: dict[LinkPort, tuple[str, str]] = {}

    def attach(self, port: LinkPort) -> None:
        pass  # membership is established by the Hello frame

    def stats(self, session: str) -> LinkStats:
        return self.sessions[session].stats

    def on_frame(self, port: LinkPort, frame: Frame) -> None:
        if isinstance(frame, Hello):
            self._on_hello(port, frame)
            return
        entry = self._port_session.get(port)
        if entry is None:
            port.send(Error(code="nosession", detail="hello first"))
            return
        name, role = entry
        sess = self.sessions.get(name)
        if sess is None:
            port.send(Error(code="nosession", detail=name))
            return
        if role == "robot":
            self._forward_down(sess, frame)
        elif role == "operator":
            self._forward_up(sess, frame)
        else:  # consoles are read-only
            port.send(Error(code="readonly", detail="console may not send"))

    def _on_hello(self, port: LinkPort, hello: Hello) -> None:
        if hello.proto_version != PROTO_VERSION:
            port.send(Error(code="version", detail=f"expected {PROTO_VERSION}"))
            port.close()
            return
        name = hello.session
        if hello.role == "robot":
            sess = self.sessions.get(name)
            if sess is not None and sess.robot_port is not None \
                    and not sess.robot_port.closed:
                port.send(Error(code="busy", detail="session has a robot"))
                port.close()
                return
            if sess is None:
                sess = _Session()
                self.sessions[name] = sess
            sess.robot_port = port
            sess.robot_hello = hello
            sess.up = ImpairedChannel(self.impair_up)
            sess.down = ImpairedChannel(self.impair_down)
            self._port_session[port] = (name, "robot")
            self.log.log(self.clock.now_ms, "session_robot", session=name)
            # late joiners have been waiting for the robot's identity
            for p in [sess.operator_port, *sess.console_ports]:
                if p is not None and not p.closed:
                    p.send(hello)
            return
        sess = self.sessions.get(name)
        if sess is None or sess.robot_port is None or sess.robot_port.closed:
            self.log.log(self.clock.now_ms, "nosession", session=name)
            port.send(Error(code="nosession", detail=name))
            port.close()
            return
        if hello.role == "operator":
            if sess.operator_port is not None and not sess.operator_port.closed:
                port.send(Error(code="busy", detail="operator slot taken"))
                port.close()
                return
            sess.operator_port = port
            self._port_session[port] = (name, "operator")
            self._forward_up(sess, hello)
        else:
            sess.console_ports.append(port)
            self._port_session[port] = (name, "console")
        if sess.robot_hello is not None:
            port.send(sess.robot_hello)
        self.log.log(self.clock.now_ms, "session_join", session=name,
                     role=hello.role)

    def _forward_up(self, sess: _Session, frame: Frame) -> None:
        if sess.robot_port is None or sess.robot_port.closed:
            return
        when = sess.up.schedule(self.clock.now_ms, frame)
        if when is None:
            sess.stats.frames_dropped += 1
            return
        if isinstance(frame, Heartbeat):
            sess.hb_sent_ms[frame.seq] = when
        sess.stats.frames_forwarded += 1
        self.clock.call_at(when, self._deliver, sess.robot_port, frame)

    def _forward_down(self, sess: _Session, frame: Frame) -> None:
        when = sess.down.schedule(self.clock.now_ms, frame)
        if when is None:
            sess.stats.frames_dropped += 1
            return
        sess.stats.frames_forwarded += 1
        if isinstance(frame, Ack):
            t0 = sess.hb_sent_ms.pop(frame.ack_seq, None)
            if t0 is not None:
                sess.stats.rtt_ms.append(when - t0)
        targets: list[LinkPort] = []
        if sess.operator_port is not None and not sess.operator_port.closed:
            targets.append(sess.operator_port)
        if isinstance(frame, Imu):
            targets.extend(p for p in sess.console_ports if not p.closed)
        for port in targets:
            self.clock.call_at(when, self._deliver, port, frame)

    @staticmethod
    def _deliver(port: LinkPort, frame: Frame) -> None:
        port.send(frame)

    def on_disconnect(self, port: LinkPort) -> None:
        entry = self._port_session.pop(port, None)
        if entry is None:
            return
        name, role = entry
        sess = self.sessions.get(name)
        if sess is None:
            return
        if role == "robot":
            self.log.log(self.clock.now_ms, "session_robot_lost", session=name)
            for p in [sess.operator_port, *sess.console_ports]:
                if p is not None and not p.closed:
                    p.close()
            del self.sessions[name]
        elif role == "operator":
            sess.operator_port = None
        elif port in sess.console_ports:
            sess.console_ports.remove(port)


class OperatorEndpoint:
    """Operator-side endpoint: command emission, telemetry view, RTT."""

    def __init__(self, clock, *, session: str = "", role: str = "operator",
                 heartbeat: bool = False, log: EventLog | None = None):
        self.clock = clock
        self.session = session
        self.role = role
        self.log = log or EventLog()
        self.port: LinkPort | None = None
        self._seq = 0
        self.latest_imu: Imu | None = None
        self.latest_imu_rx_ms: float | None = None
        self.read_only = False
        self.connected = False
        self.robot_hello: Hello | None = None
        self.stats = LinkStats()
        self._pending_hb: dict[int, tuple[float, object]] = {}
        self._heartbeat = heartbeat
        self._hb_timer = None
        self.imu_listeners: list = []
        self.sent_commands: list[tuple] = []

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def attach(self, port: LinkPort) -> None:
        self.port = port
        self.connected = True
        port.send(Hello(role=self.role, session=self.session))
        if self._heartbeat:
            self._hb_timer = self.clock.call_later(
                HEARTBEAT_PERIOD_MS, self._hb_tick)

    def on_frame(self, port: LinkPort, frame: Frame) -> None:
        if isinstance(frame, Imu):
            self.latest_imu = frame
            self.latest_imu_rx_ms = self.clock.now_ms
            for fn in self.imu_listeners:
                fn(frame)
        elif isinstance(frame, Ack):
            entry = self._pending_hb.pop(frame.ack_seq, None)
            if entry is not None:
                t0, timer = entry
                if timer is not None:
                    timer.cancel()
                self.stats.rtt_ms.append(self.clock.now_ms - t0)
        elif isinstance(frame, Hello):
            self.robot_hello = frame
        elif isinstance(frame, Error):
            self.log.log(self.clock.now_ms, "error_received", code=frame.code)
            if frame.code == "busy":
                self.read_only = True

    def on_disconnect(self, port: LinkPort) -> None:
        self.connected = False
        if self._hb_timer is not None:
            self._hb_timer.cancel()
            self._hb_timer = None

    def send_cmd(self, axis: AxisId | str, direction: int, on: bool) -> Cmd:
        code = axis.value if isinstance(axis, AxisId) else axis
        frame = Cmd(axis=code, dir=direction, on=on, seq=self._next_seq(),
                    ts_ms=int(self.clock.now_ms))
        self.sent_commands.append((frame.ts_ms, frame.seq, code, direction, on))
        self.port.send(frame)
        return frame

    def all_off(self) -> None:
        for axis in AxisId:
            self.send_cmd(axis, 1, False)

    # ----------------------------------------------------------------- RTT

    def send_heartbeat(self, timeout_ms: int = RTT_TIMEOUT_MS) -> int:
        seq = self._next_seq()
        timer = self.clock.call_later(timeout_ms, self._hb_timeout, seq)
        self._pending_hb[seq] = (self.clock.now_ms, timer)
        self.port.send(Heartbeat(seq=seq, ts_ms=int(self.clock.now_ms)))
        return seq

    def _hb_timeout(self, seq: int) -> None:
        if self._pending_hb.pop(seq, None) is not None:
            self.stats.rtt_lost += 1

    def _hb_tick(self) -> None:
        if not self.connected:
            return
        self.send_heartbeat()
        self._hb_timer = self.clock.call_later(HEARTBEAT_PERIOD_MS, self._hb_tick)


def measure_rtt(operator: OperatorEndpoint,
                timeout_ms: int = RTT_TIMEOUT_MS) -> int:
    """Fire one heartbeat; the matching Ack appends an RTT sample."""
    return operator.send_heartbeat(timeout_ms)
