"""Deterministic plant model of the 4-axis robotic probe.

Four stepper-driven axes move at a constant step rate while engaged and are
strictly on/off: an axis is either stepping in one direction or holding
position.  The two steering axes drive the probe tip through a wire
transmission with backlash, modeled as a play operator: the tip angle is
clamped between the calibrated ascending and descending envelope branches
and holds its value while a direction reversal traverses the dead zone.

The model is rate independent.  Advancing 1000 ms in one call or in many
smaller calls produces the same state, and the tip angle depends only on
the sequence of step positions, never on timing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import BacklashEnvelope, Calibration

DEFAULT_RATE_STEPS_PER_S = 400.0
TICK_MS = 5


class AxisId(enum.Enum):
    TRANSLATION = "TR"
    ROTATION = "RO"
    STEER_LR = "LR"
    STEER_UD = "UD"


STEERING_AXES = (AxisId.STEER_LR, AxisId.STEER_UD)


class RangeError(ValueError):
    """Step position outside the calibrated envelope range."""


@dataclass(frozen=True)
class MotorAxis:
    """One stepper axis.  Position is a step count; engaged_dir is -1/0/+1.

    Positions are stored as floats so arbitrary rates stay exact over
    fractional ticks; at the default 400 steps/s and 5 ms tick every
    reachable position is a whole number of steps.
    """

    position_steps: float
    min_steps: float
    max_steps: float
    rate_steps_per_s: float = DEFAULT_RATE_STEPS_PER_S
    engaged_dir: int = 0

    def moved(self, dt_ms: float) -> "MotorAxis":
        if self.engaged_dir == 0 or dt_ms == 0:
            return self
        delta = self.engaged_dir * self.rate_steps_per_s * dt_ms / 1000.0
        pos = min(self.max_steps, max(self.min_steps, self.position_steps + delta))
        return replace(self, position_steps=pos)


@dataclass(frozen=True)
class HysteresisState:
    """Play-operator memory for one steering axis: the held tip angle."""

    tip_deg: float


@dataclass(frozen=True)
class TipPose:
    roll_deg: float
    pitch_deg: float
    yaw_deg: float
    insertion_mm: float


@dataclass(frozen=True)
class ProbeState:
    axes: dict[AxisId, MotorAxis]
    hysteresis: dict[AxisId, HysteresisState]
    clock_ms: int = 0


@dataclass(frozen=True)
class ImuReading:
    roll_deg: float
    pitch_deg: float
    yaw_deg: float
    ts_ms: int
    seq: int


def initial_state(calibration: Calibration,
                  rate_steps_per_s: float = DEFAULT_RATE_STEPS_PER_S) -> ProbeState:
    """Probe at rest: steering axes at neutral with unbiased tip memory."""
    lr, ud = calibration.steer_lr, calibration.steer_ud
    lr_neutral = 0.5 * (lr.min_steps + lr.max_steps)
    ud_neutral = 0.5 * (ud.min_steps + ud.max_steps)
    axes = {
        AxisId.TRANSLATION: MotorAxis(0.0, 0.0, 6000.0, rate_steps_per_s),
        AxisId.ROTATION: MotorAxis(0.0, -1800.0, 1800.0, rate_steps_per_s),
        AxisId.STEER_LR: MotorAxis(lr_neutral, lr.min_steps, lr.max_steps, rate_steps_per_s),
        AxisId.STEER_UD: MotorAxis(ud_neutral, ud.min_steps, ud.max_steps, rate_steps_per_s),
    }
    hysteresis = {
        AxisId.STEER_LR: HysteresisState(lr.midpoint(lr_neutral)),
        AxisId.STEER_UD: HysteresisState(ud.midpoint(ud_neutral)),
    }
    return ProbeState(axes=axes, hysteresis=hysteresis, clock_ms=0)


def apply_axis_command(state: ProbeState, axis: AxisId, direction: int,
                       on: bool) -> ProbeState:
    """Set one axis on (stepping in ``direction``) or off.  Idempotent."""
    if direction not in (-1, 1):
        raise ValueError(f"direction must be -1 or +1, got {direction!r}")
    new_dir = direction if on else 0
    motor = state.axes[axis]
    if motor.engaged_dir == new_dir:
        return state
    axes = dict(state.axes)
    axes[axis] = replace(motor, engaged_dir=new_dir)
    return replace(state, axes=axes)


def play_update(env: BacklashEnvelope, mem: HysteresisState,
                s_new: float) -> HysteresisState:
    """Advance the play operator to a new step position.

    The new tip angle is the old one clamped into the envelope at the new
    position.  While a reversal stays inside the dead zone neither branch
    binds and the tip holds; once the opposing branch catches up the tip
    rides it.  Valid for any monotone move between calls.
    """
    if s_new < env.min_steps or s_new > env.max_steps:
        raise RangeError(
            f"step position {s_new} outside [{env.min_steps}, {env.max_steps}]"
        )
    lo = float(env.ascending(s_new))
    hi = float(env.descending(s_new))
    return HysteresisState(min(hi, max(lo, mem.tip_deg)))


def advance(state: ProbeState, dt_ms: int, calibration: Calibration) -> ProbeState:
    """Advance the plant by ``dt_ms`` with the current axis engagements."""
    if dt_ms < 0:
        raise ValueError("dt_ms must be non-negative")
    if dt_ms == 0:
        return state
    axes = {aid: motor.moved(dt_ms) for aid, motor in state.axes.items()}
    hysteresis = dict(state.hysteresis)
    for aid, env in ((AxisId.STEER_LR, calibration.steer_lr),
                     (AxisId.STEER_UD, calibration.steer_ud)):
        if axes[aid].position_steps != state.axes[aid].position_steps:
            hysteresis[aid] = play_update(env, hysteresis[aid],
                                          axes[aid].position_steps)
    return ProbeState(axes=axes, hysteresis=hysteresis,
                      clock_ms=state.clock_ms + dt_ms)


def tip_pose(state: ProbeState, calibration: Calibration) -> TipPose:
    """Compose the axis outputs into one tip pose record."""
    return TipPose(
        roll_deg=calibration.rotation.to_output(
            state.axes[AxisId.ROTATION].position_steps),
        pitch_deg=state.hysteresis[AxisId.STEER_UD].tip_deg,
        yaw_deg=state.hysteresis[AxisId.STEER_LR].tip_deg,
        insertion_mm=calibration.translation.to_output(
            state.axes[AxisId.TRANSLATION].position_steps),
    )


def reversal_slack_steps(env: BacklashEnvelope, position_steps: float,
                         tip_deg: float, direction: int) -> float:
    """Steps of dead travel before the tip responds to motion in ``direction``.

    Zero when the tip sits on the branch that direction rides; the full
    local gap right after a reversal from the opposite branch.
    """
    if direction > 0:
        if tip_deg <= float(env.ascending(position_steps)):
            return 0.0
        return max(0.0, env.ascending_inverse(tip_deg) - position_steps)
    if tip_deg >= float(env.descending(position_steps)):
        return 0.0
    return max(0.0, position_steps - env.descending_inverse(tip_deg))


class ImuSensor:
    """Additive-noise emulation of the tip-mounted IMU.

    Gaussian noise (default sigma 0.03 deg, keeping 3 sigma under the 0.1
    deg rated accuracy) is added per angle, then readings are quantized to
    0.01 deg.  Sequence numbers increase by one per sample.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0,
                 sigma_deg: float = 0.03, quantum_deg: float = 0.01):
        self._rng = np.random.default_rng(seed)
        self.sigma_deg = sigma_deg
        self.quantum_deg = quantum_deg
        self._seq = 0

    def sample(self, pose: TipPose, ts_ms: int) -> ImuReading:
        if self.sigma_deg > 0.0:
            noise = self._rng.normal(0.0, self.sigma_deg, size=3)
        else:
            noise = np.zeros(3)
        q = self.quantum_deg
        vals = [float(np.round((a + n) / q) * q)
                for a, n in zip((pose.roll_deg, pose.pitch_deg, pose.yaw_deg), noise)]
        self._seq += 1
        return ImuReading(roll_deg=vals[0], pitch_deg=vals[1], yaw_deg=vals[2],
                          ts_ms=ts_ms, seq=self._seq)


class ProbeSession:
    """Stateful wrapper owning one probe: lazy exact advance plus sampling.

    Commands are applied at whatever times the caller chooses; the plant is
    advanced to each event time before the mutation, which by rate
    independence is identical to fixed-step integration.
    """

    def __init__(self, calibration: Calibration,
                 rate_steps_per_s: float = DEFAULT_RATE_STEPS_PER_S,
                 imu_seed: int | np.random.SeedSequence = 0,
                 imu_sigma_deg: float = 0.03):
        self.calibration = calibration
        self.state = initial_state(calibration, rate_steps_per_s)
        self.imu = ImuSensor(imu_seed, sigma_deg=imu_sigma_deg)

    def advance_to(self, t_ms: int) -> None:
        dt = int(t_ms) - self.state.clock_ms
        if dt < 0:
            raise ValueError(f"time moved backwards: {t_ms} < {self.state.clock_ms}")
        if dt:
            self.state = advance(self.state, dt, self.calibration)

    def apply(self, axis: AxisId, direction: int, on: bool) -> None:
        self.state = apply_axis_command(self.state, axis, direction, on)

    def all_off(self) -> None:
        for axis in AxisId:
            self.apply(axis, 1, False)

    def any_engaged(self) -> bool:
        return any(m.engaged_dir != 0 for m in self.state.axes.values())

    def pose(self) -> TipPose:
        return tip_pose(self.state, self.calibration)

    def sample_imu(self) -> ImuReading:
        return self.imu.sample(self.pose(), self.state.clock_ms)

    def steering_tip(self, axis: AxisId) -> float:
        return self.state.hysteresis[axis].tip_deg

    def slack_steps(self, axis: AxisId, direction: int) -> float:
        env = self.calibration.envelope(
            "steer_lr" if axis is AxisId.STEER_LR else "steer_ud")
        motor = self.state.axes[axis]
        return reversal_slack_steps(env, motor.position_steps,
                                    self.state.hysteresis[axis].tip_deg, direction)

    def snapshot(self) -> tuple:
        """Hashable full-state snapshot for trajectory comparison."""
        parts = [self.state.clock_ms]
        for aid in AxisId:
            m = self.state.axes[aid]
            parts.append((aid.value, m.position_steps, m.engaged_dir))
        for aid in STEERING_AXES:
            parts.append((aid.value, self.state.hysteresis[aid].tip_deg))
        return tuple(parts)
