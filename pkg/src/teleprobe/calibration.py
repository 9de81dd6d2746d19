"""Calibration data for the probe plant.

A calibration bundles the backlash envelopes of the two steering axes with
the linear step-to-output maps of the rotation and translation axes.  The
envelopes are per-configuration measurement data, not code: bending a
flexible shaft differently changes the deadbands, so they ship as JSON and
are swappable at load time.

An envelope stores two sampled curves over a common motor-step grid:

* ``ascending_deg``  - tip angle traced while steps increase
* ``descending_deg`` - tip angle traced while steps decrease

Both curves are non-decreasing, the descending curve never lies below the
ascending one, and outside the declared hysteresis zone the two coincide.
Values between grid points are linearly interpolated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BRANCH_MATCH_TOL = 1e-9


class CalibrationError(ValueError):
    """Raised when a calibration file is malformed or violates an invariant."""


@dataclass(frozen=True)
class BacklashEnvelope:
    """Sampled hysteresis envelope for one steering axis."""

    grid: np.ndarray
    ascending_deg: np.ndarray
    descending_deg: np.ndarray
    zone: tuple[float, float]

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        asc = np.asarray(self.ascending_deg, dtype=float)
        desc = np.asarray(self.descending_deg, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "ascending_deg", asc)
        object.__setattr__(self, "descending_deg", desc)
        if grid.ndim != 1 or grid.size < 2:
            raise CalibrationError("envelope grid needs at least two points")
        if asc.shape != grid.shape or desc.shape != grid.shape:
            raise CalibrationError("branch arrays must match the grid length")
        dg = np.diff(grid)
        if np.any(dg <= 0):
            i = int(np.argmax(dg <= 0))
            raise CalibrationError(f"grid not strictly increasing at index {i + 1}")
        for name, arr in (("ascending_deg", asc), ("descending_deg", desc)):
            bad = np.diff(arr) < -BRANCH_MATCH_TOL
            if np.any(bad):
                i = int(np.argmax(bad))
                raise CalibrationError(f"{name} decreases at grid index {i + 1}")
        below = desc - asc < -BRANCH_MATCH_TOL
        if np.any(below):
            i = int(np.argmax(below))
            raise CalibrationError(
                f"descending branch below ascending branch at grid index {i}"
            )
        lo, hi = self.zone
        outside = (grid < lo) | (grid > hi)
        mismatch = outside & (np.abs(desc - asc) >= BRANCH_MATCH_TOL)
        if np.any(mismatch):
            i = int(np.argmax(mismatch))
            raise CalibrationError(
                f"branches differ outside the hysteresis zone at grid index {i}"
            )

    @property
    def min_steps(self) -> float:
        return float(self.grid[0])

    @property
    def max_steps(self) -> float:
        return float(self.grid[-1])

    def ascending(self, steps: float | np.ndarray) -> float | np.ndarray:
        return np.interp(steps, self.grid, self.ascending_deg)

    def descending(self, steps: float | np.ndarray) -> float | np.ndarray:
        return np.interp(steps, self.grid, self.descending_deg)

    def midpoint(self, steps: float) -> float:
        """Midpoint between the branches; used to seed hysteresis memory."""
        return 0.5 * (float(self.ascending(steps)) + float(self.descending(steps)))

    def ascending_inverse(self, tip_deg: float) -> float:
        """Smallest step position whose ascending value reaches ``tip_deg``."""
        return float(np.interp(tip_deg, self.ascending_deg, self.grid))

    def descending_inverse(self, tip_deg: float) -> float:
        """Largest step position whose descending value stays at ``tip_deg``."""
        # np.interp on a non-decreasing curve lands on the left edge of a
        # plateau; for the descending branch that is the re-engagement point.
        return float(np.interp(tip_deg, self.descending_deg, self.grid))


@dataclass(frozen=True)
class LinearAxisMap:
    """Hysteresis-free linear map for the rotation or translation axis."""

    steps_per_unit: float
    neutral_steps: float = 0.0

    def to_output(self, steps: float) -> float:
        return (steps - self.neutral_steps) / self.steps_per_unit


@dataclass(frozen=True)
class Calibration:
    steps_per_wheel_degree: float
    steer_lr: BacklashEnvelope
    steer_ud: BacklashEnvelope
    rotation: LinearAxisMap
    translation: LinearAxisMap

    def envelope(self, axis_name: str) -> BacklashEnvelope:
        if axis_name == "steer_lr":
            return self.steer_lr
        if axis_name == "steer_ud":
            return self.steer_ud
        raise KeyError(axis_name)


DEFAULT_CALIB_PATH = Path(__file__).parent / "calib" / "default.json"


def _envelope_from_dict(name: str, data: dict) -> BacklashEnvelope:
    try:
        grid = data["grid"]
        asc = data["ascending_deg"]
        desc = data["descending_deg"]
        zone = data["zone"]
    except KeyError as exc:
        raise CalibrationError(f"axis {name}: missing field {exc}") from exc
    if len(zone) != 2:
        raise CalibrationError(f"axis {name}: zone must be [lo, hi]")
    try:
        return BacklashEnvelope(
            grid=np.asarray(grid, dtype=float),
            ascending_deg=np.asarray(asc, dtype=float),
            descending_deg=np.asarray(desc, dtype=float),
            zone=(float(zone[0]), float(zone[1])),
        )
    except CalibrationError as exc:
        raise CalibrationError(f"axis {name}: {exc}") from exc


def load_calibration(path: str | Path | None = None) -> Calibration:
    """Load and validate a calibration file (the shipped default if None)."""
    path = Path(path) if path is not None else DEFAULT_CALIB_PATH
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CalibrationError(f"{path}: not valid JSON: {exc}") from exc
    try:
        axes = raw["axes"]
        spwd = float(raw["steps_per_wheel_degree"])
        rotation = LinearAxisMap(float(axes["rotation"]["steps_per_degree"]))
        translation = LinearAxisMap(float(axes["translation"]["steps_per_mm"]))
    except KeyError as exc:
        raise CalibrationError(f"{path}: missing field {exc}") from exc
    return Calibration(
        steps_per_wheel_degree=spwd,
        steer_lr=_envelope_from_dict("steer_lr", axes["steer_lr"]),
        steer_ud=_envelope_from_dict("steer_ud", axes["steer_ud"]),
        rotation=rotation,
        translation=translation,
    )


# --------------------------------------------------------------------------
# Default calibration construction
#
# Steering axes span [0, 6000] motor steps with neutral at 3000, at 80 steps
# per degree of wheel rotation (so a 1200-step deadband is 15 degrees of
# wheel travel and 640 steps is 8 degrees).
#
# Left-right: both branches linear at 0.025 deg/step with a constant
# 1200-step horizontal gap, so the deadband covers the whole travel:
#     ascending(s)  = 0.025 * (s - 3600)
#     descending(s) = 0.025 * (s - 2400)
#
# Up-down: hysteresis only inside [1800, 4200].  The ascending branch is
# piecewise linear inside the zone (0.020 deg/step below neutral, 0.026
# above) and the descending branch is the ascending branch shifted left by
# a triangular horizontal-gap profile peaking at 640 steps at neutral and
# falling to zero at the zone edges:
#     descending(s) = ascending(s + gap(s)),
#     gap(s) = 640 * max(0, 1 - |s - 3000| / 1200)
# Outside the zone the branches coincide and saturate toward the travel
# limits along monotone cubic (Hermite) tails.
# --------------------------------------------------------------------------

STEER_MIN_STEPS = 0
STEER_MAX_STEPS = 6000
STEER_NEUTRAL_STEPS = 3000
STEPS_PER_WHEEL_DEGREE = 80.0

_LR_SLOPE = 0.025
_LR_GAP_STEPS = 1200.0

_UD_ZONE = (1800.0, 4200.0)
_UD_SLOPE_LOW = 0.020
_UD_SLOPE_HIGH = 0.026
_UD_GAP_STEPS = 640.0
# Zone-edge tip values chosen so the branch midpoint at neutral is 0 deg.
_UD_EDGE_LO = -32.32
_UD_EDGE_HI = _UD_EDGE_LO + _UD_SLOPE_LOW * 1200 + _UD_SLOPE_HIGH * 1200
_UD_TAIL_DROP = 16.0


def _hermite(s, s0, s1, y0, y1, m0, m1):
    """Cubic Hermite segment; monotone for the slopes used here."""
    h = s1 - s0
    t = (np.asarray(s, dtype=float) - s0) / h
    h00 = (1 + 2 * t) * (1 - t) ** 2
    h10 = t * (1 - t) ** 2
    h01 = t * t * (3 - 2 * t)
    h11 = t * t * (t - 1)
    return h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1


def _ud_ascending(s):
    s = np.asarray(s, dtype=float)
    lo, hi = _UD_ZONE
    out = np.empty_like(s)
    below = s < lo
    above = s > hi
    mid_low = (~below) & (s <= STEER_NEUTRAL_STEPS)
    mid_high = (~above) & (s > STEER_NEUTRAL_STEPS)
    out[below] = _hermite(
        s[below], STEER_MIN_STEPS, lo, _UD_EDGE_LO - _UD_TAIL_DROP, _UD_EDGE_LO,
        0.0, _UD_SLOPE_LOW,
    )
    out[mid_low] = _UD_EDGE_LO + _UD_SLOPE_LOW * (s[mid_low] - lo)
    mid_tip = _UD_EDGE_LO + _UD_SLOPE_LOW * (STEER_NEUTRAL_STEPS - lo)
    out[mid_high] = mid_tip + _UD_SLOPE_HIGH * (s[mid_high] - STEER_NEUTRAL_STEPS)
    out[above] = _hermite(
        s[above], hi, STEER_MAX_STEPS, _UD_EDGE_HI, _UD_EDGE_HI + _UD_TAIL_DROP,
        _UD_SLOPE_HIGH, 0.0,
    )
    return out


def _ud_gap(s):
    s = np.asarray(s, dtype=float)
    return _UD_GAP_STEPS * np.clip(1.0 - np.abs(s - STEER_NEUTRAL_STEPS) / 1200.0, 0.0, None)


def default_calibration_dict(grid_step: int = 40) -> dict:
    """Build the shipped default calibration as a plain JSON-ready dict."""
    grid = np.arange(STEER_MIN_STEPS, STEER_MAX_STEPS + 1, grid_step, dtype=float)

    lr_asc = _LR_SLOPE * (grid - (STEER_NEUTRAL_STEPS + _LR_GAP_STEPS / 2))
    lr_desc = _LR_SLOPE * (grid - (STEER_NEUTRAL_STEPS - _LR_GAP_STEPS / 2))

    ud_asc = _ud_ascending(grid)
    shifted = np.minimum(grid + _ud_gap(grid), STEER_MAX_STEPS)
    ud_desc = _ud_ascending(shifted)

    def _round(a):
        return [round(float(v), 6) for v in a]

    return {
        "steps_per_wheel_degree": STEPS_PER_WHEEL_DEGREE,
        "axes": {
            "steer_lr": {
                "grid": [float(v) for v in grid],
                "ascending_deg": _round(lr_asc),
                "descending_deg": _round(lr_desc),
                "zone": [float(STEER_MIN_STEPS), float(STEER_MAX_STEPS)],
            },
            "steer_ud": {
                "grid": [float(v) for v in grid],
                "ascending_deg": _round(ud_asc),
                "descending_deg": _round(ud_desc),
                "zone": [_UD_ZONE[0], _UD_ZONE[1]],
            },
            "rotation": {"steps_per_degree": 10.0},
            "translation": {"steps_per_mm": 100.0},
        },
    }


def write_default_calibration(path: str | Path = DEFAULT_CALIB_PATH) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(default_calibration_dict(), indent=1) + "\n")
    return path
