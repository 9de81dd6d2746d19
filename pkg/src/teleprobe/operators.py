"""Scripted operator policies for the target-reaching task.

Three operator conditions are modeled: hands-on-the-wheels manual control
and two remote on/off input devices (a button gamepad and a joystick pad).
All three drive the same on/off plant interface; what differs is reaction
latency, decision cadence, release anticipation, and the chance of a wasted
decision, which is where the measured performance gaps between conditions
come from.

The policy is bang-bang with two regimes:

* far from the target the axis is held on and released early by
  ``anticipation_deg`` to counter the latency in the loop;
* near the target the operator jogs with short timed taps sized to the
  remaining error.  When a tap visibly does nothing (the input is being
  swallowed by the backlash dead zone) the next tap is held longer, which
  reproduces the characteristic overshoot-and-oscillate behavior around
  direction reversals.

A segment is finished when the axis is off and the viewed angle has been
stable within 0.05 degrees for one second.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import Calibration
from .metrics import SegmentRecord, TraceSample, segment_metrics
from .netstack import OperatorEndpoint, RobotEndpoint
from .probe import DEFAULT_RATE_STEPS_PER_S, AxisId
from .protocol import Imu

SETTLE_WINDOW_MS = 1000
SETTLE_BAND_DEG = 0.05
TELEMETRY_SILENCE_ABORT_MS = 3000
MAX_TAP_MS = 600
DEFAULT_MAX_SEGMENT_MS = 120_000


@dataclass(frozen=True)
class OperatorProfile:
    name: str
    reaction_ms: int
    decision_period_ms: int
    stop_threshold_deg: float = 0.3
    anticipation_deg: float = 0.0
    fumble_prob: float = 0.0

    def __post_init__(self):
        if self.reaction_ms < 0 or self.decision_period_ms <= 0:
            raise ValueError("latencies must be non-negative")
        if self.stop_threshold_deg <= 0:
            raise ValueError("stop_threshold_deg must be positive")
        if not 0.0 <= self.fumble_prob < 1.0:
            raise ValueError("fumble_prob must be in [0, 1)")


def builtin_profiles() -> dict[str, OperatorProfile]:
    """Default calibrated conditions: manual, gamepad, joystick."""
    # anticipation deliberately under-compensates the slower devices: the
    # clumsier the interface, the worse the operator's latency lead, which
    # is what turns extra reaction time into overshoot-and-correct cycles
    return {
        "manual": OperatorProfile("manual", reaction_ms=120,
                                  decision_period_ms=50,
                                  anticipation_deg=1.7, fumble_prob=0.0),
        "gamepad": OperatorProfile("gamepad", reaction_ms=180,
                                   decision_period_ms=100,
                                   anticipation_deg=2.2, fumble_prob=0.02),
        "joystick": OperatorProfile("joystick", reaction_ms=250,
                                    decision_period_ms=100,
                                    anticipation_deg=2.6, fumble_prob=0.06),
    }


@dataclass(frozen=True)
class TargetScript:
    axis: AxisId
    targets_deg: tuple[float, ...]
    tolerance_deg: float = 1.0

    def __post_init__(self):
        if self.axis not in (AxisId.STEER_LR, AxisId.STEER_UD):
            raise ValueError("target scripts drive a steering axis")
        if len(self.targets_deg) != 10:
            raise ValueError("a target script has exactly 10 targets")
        object.__setattr__(self, "targets_deg", tuple(float(t) for t in self.targets_deg))


# The left-right sequence is long sweeping runs with one small and one wide
# direction change; the up-down sequence hops out of the hysteresis region
# quickly but reverses repeatedly inside it, where small moves keep running
# into a dead zone that is wide relative to the commanded adjustments.
_DEFAULT_TARGETS = {
    AxisId.STEER_LR: (30.0, 55.0, 53.5, 25.0, -15.0, -45.0, 5.0, 25.0, 45.0, 57.0),
    AxisId.STEER_UD: (26.0, 27.5, 3.0, 10.0, 8.5, 2.5, 9.5, -6.0, -34.0, -35.5),
}


def default_target_script(axis: AxisId,
                          calibration: Calibration | None = None) -> TargetScript:
    """Built-in 10-target sequence for one steering axis.

    The sequences mix small adjustments, a traverse through the hysteresis
    region, and direction changes both smaller and larger than the local
    deadband; ``script_categories`` verifies those properties against a
    calibration.
    """
    return TargetScript(axis=axis, targets_deg=_DEFAULT_TARGETS[axis])


def load_script(path: str | Path) -> TargetScript:
    raw = json.loads(Path(path).read_text())
    axis = {"LR": AxisId.STEER_LR, "UD": AxisId.STEER_UD}[raw["axis"]]
    return TargetScript(axis=axis, targets_deg=tuple(raw["targets_deg"]),
                        tolerance_deg=float(raw.get("tolerance_deg", 1.0)))


def save_script(path: str | Path, script: TargetScript) -> None:
    Path(path).write_text(json.dumps({
        "axis": script.axis.value,
        "targets_deg": list(script.targets_deg),
        "tolerance_deg": script.tolerance_deg,
    }, indent=1))


def resolve_script(name: str, calibration: Calibration | None = None) -> TargetScript:
    if name in ("lr_default", "lr"):
        return default_target_script(AxisId.STEER_LR, calibration)
    if name in ("ud_default", "ud"):
        return default_target_script(AxisId.STEER_UD, calibration)
    return load_script(name)


def resolve_profile(name: str) -> OperatorProfile:
    profiles = builtin_profiles()
    if name in profiles:
        return profiles[name]
    raw = json.loads(Path(name).read_text())
    return OperatorProfile(**raw)


def script_categories(script: TargetScript, calibration: Calibration) -> dict:
    """Classify the script's moves against the envelope it will run on.

    Walks the nominal branch positions of each target and reports whether
    the script contains a small adjustment, a traverse through the middle
    of the hysteresis zone, and direction reversals smaller and larger than
    the local deadband.
    """
    env = calibration.envelope(
        "steer_lr" if script.axis is AxisId.STEER_LR else "steer_ud")
    lo, hi = env.zone
    mid = 0.5 * (lo + hi)
    core = ((hi - lo) / 8.0) or 250.0
    neutral = 0.5 * (env.min_steps + env.max_steps)

    out = {"small_adjustment": False, "zone_crossing": False,
           "reversal_in_deadband": False, "reversal_outside_deadband": False}
    tip = env.midpoint(neutral)
    pos = neutral
    prev_delta = 0.0
    for target in script.targets_deg:
        delta = target - tip
        if delta == 0.0:
            continue
        if abs(delta) < 2.0:
            out["small_adjustment"] = True
        new_pos = (env.ascending_inverse(target) if delta > 0
                   else env.descending_inverse(target))
        if min(pos, new_pos) <= mid - core and max(pos, new_pos) >= mid + core:
            out["zone_crossing"] = True
        if prev_delta and np.sign(delta) != np.sign(prev_delta):
            grid_slope = max(1e-9, float(np.interp(pos + 1, env.grid, env.ascending_deg)
                                         - np.interp(pos - 1, env.grid, env.ascending_deg)) / 2.0)
            naive_steps = abs(delta) / grid_slope
            if delta < 0:
                gap = max(0.0, pos - env.descending_inverse(tip))
            else:
                gap = max(0.0, env.ascending_inverse(tip) - pos)
            if gap > 1.0 and naive_steps < gap:
                out["reversal_in_deadband"] = True
            if gap <= 1.0 or naive_steps > gap:
                out["reversal_outside_deadband"] = True
        tip, pos, prev_delta = target, new_pos, delta
    return out


def axis_speed_estimate(calibration: Calibration, axis: AxisId,
                        rate_steps_per_s: float = DEFAULT_RATE_STEPS_PER_S) -> float:
    """Rough tip speed (deg/s) the operator assumes when sizing taps."""
    env = calibration.envelope(
        "steer_lr" if axis is AxisId.STEER_LR else "steer_ud")
    lo, hi = env.zone
    if hi - lo < 1.0:
        lo, hi = env.min_steps, env.max_steps
    slope = (float(env.ascending(hi)) - float(env.ascending(lo))) / (hi - lo)
    return max(1e-6, slope * rate_steps_per_s)


class OperatorModel:
    """One scripted operator running one target script over a connection."""

    def __init__(self, clock, endpoint: OperatorEndpoint,
                 profile: OperatorProfile, script: TargetScript,
                 calibration: Calibration, seed=0,
                 robot: RobotEndpoint | None = None,
                 rate_steps_per_s: float = DEFAULT_RATE_STEPS_PER_S,
                 max_segment_ms: int = DEFAULT_MAX_SEGMENT_MS):
        self.clock = clock
        self.endpoint = endpoint
        self.profile = profile
        self.script = script
        self.axis = script.axis
        self.robot = robot
        self.speed_deg_s = axis_speed_estimate(calibration, script.axis,
                                               rate_steps_per_s)
        # continuous drive cannot stop more precisely than its sampling
        # quantization travels; anything closer is handled with timed taps
        self.tap_region_deg = self.speed_deg_s * (
            profile.decision_period_ms + 40) / 1000.0
        self.min_tap_ms = max(5.0, profile.decision_period_ms / 2.0)
        self._rng = np.random.default_rng(seed)
        self.records: list[SegmentRecord] = []
        self.done = False
        self.aborted = False
        self.max_segment_ms = max_segment_ms

        self._target_idx = 0
        self._planned_dir = 0
        self._pending_sends = 0
        self._busy_until_ms = -1.0
        self._tap_len_ms = 0.0
        self._tap_off_timer = None
        self._tap_off_at_ms = 0.0
        self._tap_on_at_ms = 0.0
        self._tap_dir = 0
        self._believed_dir = 0
        self._intent_dir = 0
        self._crossing = False
        self._swallowed_ms = 0.0
        self._gap_est_ms = {1: 0.0, -1: 0.0}
        self._pre_tap_angle: float | None = None
        self._trace: list[TraceSample] = []
        self._window: list[tuple[float, float]] = []
        self._segment_start_ms: float | None = None
        self._cmd_index = 0
        self._last_dir_applied = 0
        self._started = False
        endpoint.imu_listeners.append(self._on_imu)

    # ------------------------------------------------------------- helpers

    @property
    def target(self) -> float:
        return self.script.targets_deg[self._target_idx]

    def _viewed(self, imu: Imu) -> float:
        return imu.pitch_deg if self.axis is AxisId.STEER_UD else imu.yaw_deg

    def _on_imu(self, imu: Imu) -> None:
        if self.done:
            return
        if not self._started:
            self._started = True
            self._segment_start_ms = self.clock.now_ms
            self.clock.call_later(self.profile.decision_period_ms, self._decide)
        angle = self._viewed(imu)
        shown = self._planned_dir or self._believed_dir
        self._trace.append(TraceSample(ts_ms=imu.ts_ms, angle_deg=angle,
                                       cmd_dir=shown, cmd_on=shown != 0))
        self._window.append((self.clock.now_ms, angle))
        cutoff = self.clock.now_ms - SETTLE_WINDOW_MS - 100
        while self._window and self._window[0][0] < cutoff:
            self._window.pop(0)

    def _moved_since_tap(self, direction: int) -> bool:
        """Debounced, direction-signed motion test against the pre-tap angle.

        Two consecutive samples must lie beyond the band in the commanded
        direction, which keeps sensor noise from steering the tap logic
        while adding at most one telemetry period of detection lag.
        """
        if self._pre_tap_angle is None or len(self._window) < 2:
            return False
        a1, a2 = self._window[-2][1], self._window[-1][1]
        lo = SETTLE_BAND_DEG
        return (direction * (a1 - self._pre_tap_angle) >= lo
                and direction * (a2 - self._pre_tap_angle) >= lo)

    # -------------------------------------------------------- command edges

    def _send_edge(self, direction: int, on: bool) -> None:
        self._pending_sends -= 1
        self._believed_dir = direction if on else 0
        if self.done or not self.endpoint.connected:
            return
        self.endpoint.send_cmd(self.axis, direction, on)

    def _schedule_edges(self, edges: list[tuple[int, bool]], at_ms: float) -> None:
        for direction, on in edges:
            self._pending_sends += 1
            self.clock.call_at(at_ms, self._send_edge, direction, on)

    def _note_reversal(self, direction: int) -> bool:
        reversed_now = self._intent_dir != 0 and direction != self._intent_dir
        self._intent_dir = direction
        if reversed_now:
            self._swallowed_ms = 0.0
        return reversed_now

    def _set_drive(self, desired: int) -> None:
        """Transition the believed commanded state, frames after reaction."""
        current = self._planned_dir
        if desired == current:
            return
        if desired != 0:
            self._note_reversal(desired)
            self._crossing = False  # held moves are not used for gap estimates
        at = self.clock.now_ms + self.profile.reaction_ms
        edges = []
        if current != 0:
            edges.append((current, False))
        if desired != 0:
            edges.append((desired, True))
        self._schedule_edges(edges, at)
        self._planned_dir = desired

    def _tap(self, direction: int, err_deg: float) -> None:
        """Timed jog toward the target, escalating while input is swallowed.

        A direction change whose dead travel has been crossed before starts
        with one long burst covering most of the remembered gap; otherwise
        taps grow geometrically until the tip responds.
        """
        reversed_now = self._note_reversal(direction)
        if reversed_now:
            self._crossing = True
        est = self._gap_est_ms[direction]
        if reversed_now and est > 3 * self.min_tap_ms:
            dur = max(self.min_tap_ms, 0.75 * est)
            self._tap_len_ms = 0.0
        else:
            # undershoot bias: half the remaining error per tap, so the
            # final approach never crosses back into the dead zone
            base = 0.5 * abs(err_deg) / self.speed_deg_s * 1000.0
            if self._tap_len_ms > 0.0:
                base = max(base, self._tap_len_ms * 1.5)
            dur = min(MAX_TAP_MS, max(self.min_tap_ms, base))
            self._tap_len_ms = dur
        self._tap_dir = direction
        at = self.clock.now_ms + self.profile.reaction_ms
        self._schedule_edges([(direction, True)], at)
        self._pending_sends += 1
        self._tap_on_at_ms = at
        self._tap_off_at_ms = at + dur
        self._tap_off_timer = self.clock.call_at(self._tap_off_at_ms,
                                                 self._send_edge, direction, False)
        latest = self.endpoint.latest_imu
        self._pre_tap_angle = self._viewed(latest) if latest else None
        self._busy_until_ms = self._tap_off_at_ms + 80.0

    def _finish_crossing(self, extra_press_ms: float) -> None:
        """The tip responded: fold the swallowed press time into the
        remembered gap width for this direction."""
        if not self._crossing:
            return
        self._crossing = False
        total = self._swallowed_ms + extra_press_ms
        old = self._gap_est_ms[self._intent_dir]
        self._gap_est_ms[self._intent_dir] = \
            total if old == 0.0 else 0.7 * old + 0.3 * total
        self._swallowed_ms = 0.0

    def _cut_tap_short(self, direction: int) -> None:
        """Release an in-flight tap early: the tip is visibly moving again."""
        self._finish_crossing(max(0.0, self.clock.now_ms - self._tap_on_at_ms))
        self._tap_len_ms = 0.0
        at = self.clock.now_ms + self.profile.reaction_ms
        if self._tap_off_timer is None or at >= self._tap_off_at_ms:
            return
        self._tap_off_timer.cancel()
        self._tap_off_at_ms = at
        self._tap_off_timer = self.clock.call_at(at, self._send_edge,
                                                 direction, False)
        self._busy_until_ms = at + 80.0

    # ------------------------------------------------------------ decisions

    def _decide(self) -> None:
        if self.done:
            return
        self.clock.call_later(self.profile.decision_period_ms, self._decide)
        now = self.clock.now_ms
        last_rx = self.endpoint.latest_imu_rx_ms
        if last_rx is None or now - last_rx > TELEMETRY_SILENCE_ABORT_MS \
                or not self.endpoint.connected:
            self._abort()
            return
        if self._segment_start_ms is not None and \
                now - self._segment_start_ms > self.max_segment_ms:
            self._abort()
            return
        if self.profile.fumble_prob > 0.0 and \
                self._rng.random() < self.profile.fumble_prob:
            return  # wasted decision cycle
        if self._tap_off_timer is not None and now < self._tap_off_at_ms:
            if self._moved_since_tap(self._tap_dir):
                self._cut_tap_short(self._tap_dir)
            return
        if now < self._busy_until_ms or self._pending_sends > 0:
            return
        imu = self.endpoint.latest_imu
        angle = self._viewed(imu)
        err = self.target - angle
        stop = self.profile.stop_threshold_deg
        release_band = stop + self.profile.anticipation_deg
        # close-in work is done with taps; continuous drive cannot stop
        # inside its own loop-lag travel
        entry_band = max(release_band, self.tap_region_deg)

        if self._planned_dir != 0:
            if abs(err) <= release_band:
                self._set_drive(0)
            elif np.sign(err) != self._planned_dir:
                if abs(err) > entry_band:
                    self._set_drive(int(np.sign(err)))  # gross overshoot
                else:
                    self._set_drive(0)  # let go, then fine-correct from rest
            return

        # axis believed off
        if abs(err) > entry_band:
            self._tap_len_ms = 0.0
            self._set_drive(int(np.sign(err)))
            return
        if abs(err) > stop:
            if self._pre_tap_angle is not None:
                if self._moved_since_tap(self._tap_dir):
                    # the last tap visibly moved the tip
                    self._finish_crossing(self._tap_off_at_ms - self._tap_on_at_ms)
                    self._tap_len_ms = 0.0
                elif self._crossing:
                    self._swallowed_ms += self._tap_off_at_ms - self._tap_on_at_ms
            self._tap(int(np.sign(err)), err)
            return
        self._finish_crossing(self._tap_off_at_ms - self._tap_on_at_ms)
        self._tap_len_ms = 0.0
        self._pre_tap_angle = None
        self._maybe_settle(now)

    # -------------------------------------------------------------- settling

    def _maybe_settle(self, now: float) -> None:
        if self._pending_sends > 0 or self._planned_dir != 0:
            return
        window = [(t, a) for t, a in self._window
                  if t >= now - SETTLE_WINDOW_MS]
        if len(window) < 8 or window[0][0] > now - SETTLE_WINDOW_MS + 100:
            return
        quarter = max(2, len(window) // 4)
        first = float(np.mean([a for _, a in window[:quarter]]))
        last = float(np.mean([a for _, a in window[-quarter:]]))
        if abs(last - first) >= SETTLE_BAND_DEG:
            return
        self._finish_segment(now, final_deg=last)

    def _segment_reversals(self) -> int:
        """Ground-truth count of direction changes swallowed by the deadband."""
        if self.robot is None:
            return 0
        count = 0
        cmds = self.robot.applied_commands
        while self._cmd_index < len(cmds):
            t, seq, code, direction, on, slack = cmds[self._cmd_index]
            self._cmd_index += 1
            if code != self.axis.value or not on:
                continue
            if self._last_dir_applied != 0 and direction != self._last_dir_applied \
                    and slack is not None and slack > 1.0:
                count += 1
            self._last_dir_applied = direction
        return count

    def _finish_segment(self, now: float, final_deg: float,
                        aborted: bool = False) -> None:
        trace = self._trace or [TraceSample(int(now), final_deg, 0, False)]
        rec = segment_metrics(
            trace, self.target, settle_ts_ms=int(now),
            reversal_in_deadband_count=self._segment_reversals())
        rec.final_deg = final_deg
        rec.error_deg = abs(final_deg - self.target)
        rec.duration_s = (now - self._segment_start_ms) / 1000.0
        rec.aborted = aborted
        self.records.append(rec)
        self._target_idx += 1
        self._trace = []
        self._segment_start_ms = now
        self._tap_len_ms = 0.0
        self._pre_tap_angle = None
        if self._target_idx >= len(self.script.targets_deg):
            self.done = True

    def _abort(self) -> None:
        if self.done:
            return
        self._set_drive(0)
        latest = self.endpoint.latest_imu
        final = self._viewed(latest) if latest else float("nan")
        self._finish_segment(self.clock.now_ms, final_deg=final, aborted=True)
        self.aborted = True
        self.done = True


def run_target_task(clock, operator: OperatorEndpoint, robot: RobotEndpoint,
                    profile: OperatorProfile, script: TargetScript,
                    calibration: Calibration, seed=0,
                    rate_steps_per_s: float = DEFAULT_RATE_STEPS_PER_S,
                    max_virtual_ms: float = 1_800_000) -> list[SegmentRecord]:
    """Run one scripted trial to completion under the virtual clock."""
    model = OperatorModel(clock, operator, profile, script, calibration,
                          seed=seed, robot=robot,
                          rate_steps_per_s=rate_steps_per_s)
    deadline = clock.now_ms + max_virtual_ms
    while not model.done and clock.now_ms < deadline:
        clock.run_for(500)
    return model.records
