"""Metric extraction and the statistics toolkit behind the experiment reports.

Covers per-segment task metrics (position error, maximum overshoot,
duration, reversals swallowed by the deadband), descriptive summaries
(mean/std and median/IQR in the inclusive median-of-halves convention,
plus the coefficient of variation), Welch's unequal-variance t-test, and
recovery of deadband widths from measured sweep curves.

Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class StatsError(ValueError):
    pass


# ------------------------------------------------------------- descriptive

@dataclass(frozen=True)
class StatsSummary:
    n: int
    mean: float
    median: float
    _std: float | None = None
    _iqr: float | None = None

    @property
    def std(self) -> float:
        if self._std is None:
            raise StatsError("std undefined for n < 2")
        return self._std

    @property
    def iqr(self) -> float:
        if self._iqr is None:
            raise StatsError("iqr undefined for n < 2")
        return self._iqr

    @property
    def cov(self) -> float:
        """Coefficient of variation, std / mean."""
        if self.std == 0.0:
            return 0.0
        if self.mean == 0.0:
            raise StatsError("cov undefined for zero mean")
        return self.std / self.mean


def _median_sorted(x: np.ndarray) -> float:
    n = x.size
    mid = n // 2
    if n % 2:
        return float(x[mid])
    return float(0.5 * (x[mid - 1] + x[mid]))


def descriptive(values) -> StatsSummary:
    """Mean/std (sample), median/IQR (inclusive median-of-halves quartiles)."""
    x = np.sort(np.asarray(list(values), dtype=float))
    n = x.size
    if n == 0:
        raise StatsError("descriptive statistics need at least one value")
    mean = float(np.sum(x) / n)
    median = _median_sorted(x)
    if n < 2:
        return StatsSummary(n=n, mean=mean, median=median)
    std = math.sqrt(float(np.sum((x - mean) ** 2)) / (n - 1))
    half = (n + 1) // 2  # odd n: the median belongs to both halves
    iqr = _median_sorted(x[n - half:]) - _median_sorted(x[:half])
    return StatsSummary(n=n, mean=mean, median=median, _std=std, _iqr=iqr)


# ----------------------------------------------------------- Welch's t-test

@dataclass(frozen=True)
class WelchResult:
    t: float
    dof: float
    p: float


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    TINY = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < TINY:
        d = TINY
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < TINY:
            d = TINY
        c = 1.0 + aa / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < TINY:
            d = TINY
        c = 1.0 + aa / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise StatsError("incomplete beta continued fraction failed to converge")


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def welch_t_test(a, b) -> WelchResult:
    """Two-sided Welch's t-test with Welch-Satterthwaite degrees of freedom."""
    xa = np.asarray(list(a), dtype=float)
    xb = np.asarray(list(b), dtype=float)
    if xa.size < 2 or xb.size < 2:
        raise StatsError("welch_t_test needs at least two values per sample")
    na, nb = xa.size, xb.size
    va = float(np.sum((xa - xa.mean()) ** 2)) / (na - 1)
    vb = float(np.sum((xb - xb.mean()) ** 2)) / (nb - 1)
    if va == 0.0 and vb == 0.0:
        raise StatsError("welch_t_test undefined for two zero-variance samples")
    se_a, se_b = va / na, vb / nb
    se = math.sqrt(se_a + se_b)
    t = (float(xa.mean()) - float(xb.mean())) / se
    dof = (se_a + se_b) ** 2 / (
        (se_a ** 2) / (na - 1) + (se_b ** 2) / (nb - 1))
    # two-sided p via the incomplete-beta identity for the Student-t CDF
    p = _betainc(dof / 2.0, 0.5, dof / (dof + t * t))
    return WelchResult(t=t, dof=dof, p=min(1.0, max(0.0, p)))


# --------------------------------------------------------- segment metrics

@dataclass(frozen=True)
class TraceSample:
    ts_ms: int
    angle_deg: float
    cmd_dir: int
    cmd_on: bool


@dataclass
class SegmentRecord:
    target_deg: float
    final_deg: float
    error_deg: float
    max_overshoot_deg: float
    duration_s: float
    reversal_in_deadband_count: int
    trace: list[TraceSample] = field(default_factory=list)
    aborted: bool = False


def segment_metrics(trace: list[TraceSample], target_deg: float,
                    settle_ts_ms: int | None = None,
                    reversal_in_deadband_count: int | None = None) -> SegmentRecord:
    """Compute the per-target metrics from a time-ordered angle trace.

    Overshoot is the largest excursion past the target in the initial
    direction of travel (zero if the target is never crossed); later
    corrective excursions only matter if they exceed the prior maximum.
    The deadband reversal count comes from simulator ground truth when
    available; otherwise direction changes followed by a frozen angle for
    300 ms while driven are counted from the trace.
    """
    if not trace:
        raise StatsError("segment_metrics needs a non-empty trace")
    if any(b.ts_ms < a.ts_ms for a, b in zip(trace, trace[1:])):
        raise StatsError("trace must be time ordered")
    start = trace[0]
    end_ts = settle_ts_ms if settle_ts_ms is not None else trace[-1].ts_ms
    final = trace[-1].angle_deg
    approach = target_deg - start.angle_deg
    direction = 0 if approach == 0 else (1 if approach > 0 else -1)
    overshoot = 0.0
    if direction != 0:
        for s in trace:
            overshoot = max(overshoot, direction * (s.angle_deg - target_deg))
        overshoot = max(0.0, overshoot)
    if reversal_in_deadband_count is None:
        reversal_in_deadband_count = _count_frozen_reversals(trace)
    return SegmentRecord(
        target_deg=target_deg,
        final_deg=final,
        error_deg=abs(final - target_deg),
        max_overshoot_deg=overshoot,
        duration_s=(end_ts - start.ts_ms) / 1000.0,
        reversal_in_deadband_count=reversal_in_deadband_count,
        trace=list(trace),
    )


def _count_frozen_reversals(trace: list[TraceSample],
                            window_ms: int = 300, band_deg: float = 0.05) -> int:
    """Trace-only fallback: direction changes with no output response."""
    count = 0
    last_dir = 0
    for i, s in enumerate(trace):
        d = s.cmd_dir if s.cmd_on else 0
        if d != 0 and last_dir != 0 and d != last_dir:
            a0 = s.angle_deg
            frozen = True
            for s2 in trace[i + 1:]:
                if s2.ts_ms - s.ts_ms > window_ms:
                    break
                if abs(s2.angle_deg - a0) > band_deg:
                    frozen = False
                    break
            if frozen:
                count += 1
        if d != 0:
            last_dir = d
    return count


# -------------------------------------------------------- deadband recovery

@dataclass(frozen=True)
class SweepRecord:
    direction: int
    samples: list[tuple[float, float]]  # (steps, mean tip angle)
    repeats: int


@dataclass(frozen=True)
class DeadbandProfile:
    gaps: list[tuple[float, float]]  # (step position, horizontal gap in steps)
    max_gap_steps: float
    gap_at_neutral_steps: float
    zone: tuple[float, float] | None  # where gap >= threshold


def _pava_nondecreasing(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators monotone regression (non-decreasing)."""
    y = y.astype(float).copy()
    w = np.ones_like(y)
    vals: list[float] = []
    wts: list[float] = []
    for yi, wi in zip(y, w):
        vals.append(float(yi))
        wts.append(float(wi))
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / (wts[-2] + wts[-1])
            wt = wts[-2] + wts[-1]
            vals = vals[:-2] + [v]
            wts = wts[:-2] + [wt]
    out = []
    i = 0
    # expand pooled blocks back to original length
    blocks = []
    total = 0
    for v, wt in zip(vals, wts):
        blocks.append((v, int(round(wt))))
        total += int(round(wt))
    for v, cnt in blocks:
        out.extend([v] * cnt)
    return np.asarray(out)


def _prepare_curve(samples, noise_tol_deg: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    steps = np.asarray([s for s, _ in samples], dtype=float)
    tips = np.asarray([t for _, t in samples], dtype=float)
    order = np.argsort(steps)
    steps, tips = steps[order], tips[order]
    drops = np.diff(tips)
    if np.any(drops < -noise_tol_deg):
        warnings.warn("sweep curve not monotone beyond noise tolerance; "
                      "applying monotone regression", stacklevel=3)
    if np.any(drops < 0):
        tips = _pava_nondecreasing(tips)
    return steps, tips


def _inverse_on(steps: np.ndarray, tips: np.ndarray, level: float,
                keep: str) -> float:
    """Inverse interpolation with plateau handling.

    ``keep='last'`` treats plateaus as ending where the curve starts rising
    (ascending-sweep semantics); ``keep='first'`` as starting where it stops
    rising (descending-sweep semantics).
    """
    if keep == "last":
        idx = np.concatenate((np.diff(tips) > 0, [True]))
    else:
        idx = np.concatenate(([True], np.diff(tips) > 0))
    t, s = tips[idx], steps[idx]
    return float(np.interp(level, t, s))


def extract_deadband(up: SweepRecord, down: SweepRecord,
                     neutral_steps: float = 3000.0,
                     zone_threshold_steps: float = 200.0) -> DeadbandProfile:
    """Horizontal gap between measured ascending and descending sweep curves.

    For each tip level reached by both sweeps, the gap is the step distance
    between where the up sweep reaches the level and where the down sweep
    falls back to it.  The neutral gap is the largest gap among levels whose
    midpoint position lies within 600 steps of neutral.
    """
    up_steps, up_tips = _prepare_curve(up.samples)
    dn_steps, dn_tips = _prepare_curve(down.samples)
    lo = max(up_tips.min(), dn_tips.min())
    hi = min(up_tips.max(), dn_tips.max())
    if hi <= lo:
        raise StatsError("sweep curves do not overlap in tip angle")
    levels = np.unique(np.concatenate((up_tips, dn_tips)))
    levels = levels[(levels > lo) & (levels < hi)]
    gaps: list[tuple[float, float]] = []
    for y in levels:
        s_up = _inverse_on(up_steps, up_tips, float(y), keep="last")
        s_dn = _inverse_on(dn_steps, dn_tips, float(y), keep="first")
        gap = max(0.0, s_up - s_dn)
        gaps.append((0.5 * (s_up + s_dn), gap))
    gaps.sort()
    if not gaps:
        raise StatsError("no overlapping tip levels between sweeps")
    max_gap = max(g for _, g in gaps)
    near = [g for pos, g in gaps if abs(pos - neutral_steps) <= 600.0]
    gap_at_neutral = max(near) if near else 0.0
    in_zone = [pos for pos, g in gaps if g >= zone_threshold_steps]
    zone = (min(in_zone), max(in_zone)) if in_zone else None
    return DeadbandProfile(gaps=gaps, max_gap_steps=max_gap,
                           gap_at_neutral_steps=gap_at_neutral, zone=zone)


# ------------------------------------------------------------------- CSV IO

TRACE_FIELDS = ["ts_ms", "angle_deg", "cmd_dir", "cmd_on"]
SUMMARY_FIELDS = ["condition", "axis", "metric", "n", "mean", "std",
                  "median", "iqr", "cov"]


def write_trace_csv(path: str | Path, trace: list[TraceSample]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACE_FIELDS)
        for s in trace:
            w.writerow([s.ts_ms, repr(s.angle_deg), s.cmd_dir, int(s.cmd_on)])


def read_trace_csv(path: str | Path) -> list[TraceSample]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(TraceSample(ts_ms=int(row["ts_ms"]),
                                   angle_deg=float(row["angle_deg"]),
                                   cmd_dir=int(row["cmd_dir"]),
                                   cmd_on=bool(int(row["cmd_on"]))))
    return out


def summary_row(condition: str, axis: str, metric: str,
                summary: StatsSummary) -> list:
    cov = ""
    try:
        cov = repr(summary.cov)
    except StatsError:
        pass
    return [condition, axis, metric, summary.n, repr(summary.mean),
            repr(summary.std) if summary.n >= 2 else "",
            repr(summary.median),
            repr(summary.iqr) if summary.n >= 2 else "", cov]


def write_summary_csv(path: str | Path, rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SUMMARY_FIELDS)
        w.writerows(rows)
