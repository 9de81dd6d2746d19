"""Independent brute-force oracles shared by the test modules.

These deliberately avoid the library's shortcut formulas: the play-operator
oracle replays every single motor step, and the statistics oracles lean on
numpy / frozen scipy outputs rather than the library implementations.
"""

from __future__ import annotations

import numpy as np


def play_replay_move(env, tip: float, s_from: float, s_to: float) -> float:
    """Replay one monotone move a single motor step at a time.

    Uses a vectorized cumulative max/min, which equals the literal
    step-by-step clamp whenever the opposing branch never binds during the
    move; that condition is checked at runtime and the literal loop is used
    as a fallback, so the result is always the true single-step replay.
    """
    if s_to == s_from:
        return tip
    n = int(round(abs(s_to - s_from)))
    sign = 1.0 if s_to > s_from else -1.0
    path = s_from + sign * np.arange(1, n + 1, dtype=float)
    path[-1] = s_to
    asc = np.interp(path, env.grid, env.ascending_deg)
    desc = np.interp(path, env.grid, env.descending_deg)
    if sign > 0:
        cand = np.maximum.accumulate(np.concatenate(([tip], asc)))[1:]
        if np.all(cand <= desc + 1e-15):
            return float(cand[-1])
    else:
        cand = np.minimum.accumulate(np.concatenate(([tip], desc)))[1:]
        if np.all(cand >= asc - 1e-15):
            return float(cand[-1])
    for a, d in zip(asc, desc):
        tip = min(d, max(a, tip))
    return float(tip)


def play_replay_sequence(env, tip0: float, s0: float, positions) -> float:
    """Single-step replay across a whole sequence of target positions."""
    tip, s = tip0, s0
    for s_next in positions:
        tip = play_replay_move(env, tip, s, s_next)
        s = s_next
    return tip


def descriptive_oracle(values):
    """Brute-force descriptive statistics (inclusive median-of-halves IQR)."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    out = {"n": n, "mean": float(np.mean(x)), "median": float(np.median(x))}
    if n >= 2:
        out["std"] = float(np.std(x, ddof=1))
        half = (n + 1) // 2
        q1 = float(np.median(x[:half]))
        q3 = float(np.median(x[n - half:]))
        out["iqr"] = q3 - q1
    return out
