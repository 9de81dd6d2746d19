"""Statistics toolkit tests against independent oracles and frozen fixtures."""

import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teleprobe.calibration import load_calibration
from teleprobe.metrics import (
    SegmentRecord,
    StatsError,
    SweepRecord,
    TraceSample,
    descriptive,
    extract_deadband,
    read_trace_csv,
    segment_metrics,
    welch_t_test,
    write_trace_csv,
)
from teleprobe.probe import HysteresisState, play_update

from oracles import descriptive_oracle

FIXTURES = json.loads((Path(__file__).parent / "welch_fixtures.json").read_text())


# ------------------------------------------------------------- descriptive

def test_descriptive_worked_example():
    s = descriptive([1, 2, 3, 4])
    assert s.mean == pytest.approx(2.5)
    assert s.std == pytest.approx(1.2910, abs=5e-5)
    assert s.median == pytest.approx(2.5)


def test_descriptive_constant_list():
    s = descriptive([7.5] * 9)
    assert s.std == 0.0
    assert s.iqr == 0.0
    assert s.cov == 0.0


def test_descriptive_single_element():
    s = descriptive([42.0])
    assert s.mean == 42.0
    assert s.median == 42.0
    with pytest.raises(StatsError):
        _ = s.std
    with pytest.raises(StatsError):
        _ = s.iqr


def test_descriptive_empty_errors():
    with pytest.raises(StatsError):
        descriptive([])


def test_descriptive_cov_zero_mean_errors():
    with pytest.raises(StatsError):
        _ = descriptive([-1.0, 1.0]).cov


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6,
                          allow_nan=False, allow_infinity=False),
                min_size=2, max_size=200))
def test_descriptive_matches_bruteforce(values):
    s = descriptive(values)
    o = descriptive_oracle(values)
    for name in ("mean", "std", "median", "iqr"):
        got = getattr(s, name)
        want = o[name]
        assert math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-9), name


def test_descriptive_bruteforce_large_seeded():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 1001))
        values = rng.normal(rng.uniform(-50, 50), rng.uniform(0.1, 30), n)
        s = descriptive(values)
        o = descriptive_oracle(values)
        for name in ("mean", "std", "median", "iqr"):
            assert math.isclose(getattr(s, name), o[name],
                                rel_tol=1e-12, abs_tol=1e-12), name


# ----------------------------------------------------------- Welch's t-test

def test_welch_identical_samples():
    r = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.t == 0.0
    assert r.p == 1.0


def test_welch_worked_example():
    r = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert r.t == pytest.approx(-1.0, abs=1e-12)
    assert r.dof == pytest.approx(8.0, abs=1e-12)
    assert r.p == pytest.approx(0.346594, abs=1e-6)


def test_welch_swap_symmetry():
    a = [0.3, 1.8, 2.2, 0.9, 1.1]
    b = [2.0, 2.6, 3.1, 2.8]
    r1 = welch_t_test(a, b)
    r2 = welch_t_test(b, a)
    assert r1.t == pytest.approx(-r2.t, abs=1e-14)
    assert r1.p == pytest.approx(r2.p, abs=1e-14)
    assert r1.dof == pytest.approx(r2.dof, abs=1e-14)


def test_welch_degenerate_variance_errors():
    with pytest.raises(StatsError):
        welch_t_test([1.0, 1.0, 1.0], [1.0, 1.0])
    with pytest.raises(StatsError):
        welch_t_test([1.0], [1.0, 2.0])


def test_welch_matches_frozen_fixture_battery():
    assert len(FIXTURES) >= 20
    for i, fx in enumerate(FIXTURES):
        r = welch_t_test(fx["a"], fx["b"])
        assert r.t == pytest.approx(fx["t"], rel=1e-6, abs=1e-9), f"pair {i}: t"
        assert r.dof == pytest.approx(fx["dof"], rel=1e-6), f"pair {i}: dof"
        assert r.p == pytest.approx(fx["p"], rel=1e-6, abs=1e-9), f"pair {i}: p"


# --------------------------------------------------------- segment metrics

def _trace(points, dir_on=(0, False)):
    d, on = dir_on
    return [TraceSample(ts_ms=t, angle_deg=a, cmd_dir=d, cmd_on=on)
            for t, a in points]


def test_segment_metrics_short_stop():
    tr = _trace([(0, 0.0), (500, 2.0), (1000, 4.6), (2000, 4.6)])
    rec = segment_metrics(tr, target_deg=5.0)
    assert rec.error_deg == pytest.approx(0.4)
    assert rec.max_overshoot_deg == 0.0
    assert rec.duration_s == pytest.approx(2.0)


def test_segment_metrics_overshoot_and_return():
    tr = _trace([(0, 0.0), (400, 3.0), (800, 7.6), (1200, 6.0), (1600, 5.1)])
    rec = segment_metrics(tr, target_deg=5.0)
    assert rec.max_overshoot_deg == pytest.approx(2.6)
    assert rec.error_deg == pytest.approx(0.1)


def test_segment_metrics_counter_overshoot_does_not_count():
    # initial approach upward; later corrective excursion below the target
    tr = _trace([(0, 0.0), (400, 6.0), (800, 3.5), (1200, 4.9)])
    rec = segment_metrics(tr, target_deg=5.0)
    assert rec.max_overshoot_deg == pytest.approx(1.0)


def test_segment_metrics_flat_trace():
    tr = _trace([(0, 1.0), (1000, 1.0)])
    rec = segment_metrics(tr, target_deg=4.0)
    assert rec.error_deg == pytest.approx(3.0)
    assert rec.max_overshoot_deg == 0.0


def test_segment_metrics_empty_trace_errors():
    with pytest.raises(StatsError):
        segment_metrics([], target_deg=0.0)


def test_segment_metrics_resampling_invariance():
    pts = [(0, 0.0), (100, 1.0), (200, 3.0), (300, 6.2), (400, 5.8), (500, 5.0)]
    dense = _trace(pts)
    sparse = _trace([pts[0], pts[3], pts[5]])  # keeps the extremum
    r1 = segment_metrics(dense, 5.0)
    r2 = segment_metrics(sparse, 5.0)
    assert r1.max_overshoot_deg == pytest.approx(r2.max_overshoot_deg)


def test_trace_csv_roundtrip(tmp_path):
    tr = [TraceSample(0, 0.12, 1, True), TraceSample(40, 0.5, 0, False)]
    p = tmp_path / "trace.csv"
    write_trace_csv(p, tr)
    assert read_trace_csv(p) == tr


# -------------------------------------------------------- deadband recovery

def _simulated_sweep(env, interval=400.0):
    """Noiseless up/down sweep through the play operator itself."""
    grid = np.arange(env.min_steps, env.max_steps + 1, interval)
    mem = HysteresisState(env.midpoint(0.5 * (env.min_steps + env.max_steps)))
    mem = play_update(env, mem, env.min_steps)
    up = []
    for s in grid:
        mem = play_update(env, mem, float(s))
        up.append((float(s), mem.tip_deg))
    down = []
    for s in grid[::-1]:
        mem = play_update(env, mem, float(s))
        down.append((float(s), mem.tip_deg))
    return (SweepRecord(direction=+1, samples=up, repeats=1),
            SweepRecord(direction=-1, samples=down, repeats=1))


def test_extract_deadband_recovers_lr(calib):
    up, down = _simulated_sweep(calib.steer_lr)
    prof = extract_deadband(up, down)
    assert prof.max_gap_steps == pytest.approx(1200.0, abs=200.0)
    assert prof.gap_at_neutral_steps == pytest.approx(1200.0, abs=200.0)


def test_extract_deadband_recovers_ud(calib):
    up, down = _simulated_sweep(calib.steer_ud)
    prof = extract_deadband(up, down)
    assert prof.gap_at_neutral_steps == pytest.approx(640.0, abs=200.0)
    assert prof.zone is not None
    lo, hi = prof.zone
    assert 1600.0 <= lo and hi <= 4400.0
    for pos, gap in prof.gaps:
        if pos < 1600.0 or pos > 4400.0:
            assert gap < 200.0


def test_extract_deadband_identical_branches():
    samples = [(float(s), 0.01 * s) for s in range(0, 6001, 400)]
    up = SweepRecord(+1, samples, 1)
    down = SweepRecord(-1, samples[::-1], 1)
    prof = extract_deadband(up, down)
    assert prof.max_gap_steps == pytest.approx(0.0, abs=1e-9)


def test_extract_deadband_applies_monotone_regression():
    samples = [(float(s), 0.01 * s) for s in range(0, 6001, 400)]
    noisy = list(samples)
    noisy[5] = (noisy[5][0], noisy[5][1] - 6.0)  # far beyond noise tolerance
    with pytest.warns(UserWarning, match="monotone"):
        extract_deadband(SweepRecord(+1, noisy, 1),
                         SweepRecord(-1, samples[::-1], 1))
