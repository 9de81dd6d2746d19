"""Injectable clocks: a deterministic virtual event loop and a real one.

Every service component schedules work through this interface, so the same
endpoint code runs under a harness-pumped virtual clock in tests and
experiments, or under a background dispatcher thread with wall time for
interactive use.  Callbacks always execute one at a time in (time, order of
scheduling) order, which is what makes virtual runs bit-reproducible.
"""

from __future__ import annotations

import heapq
import itertools
import os
import threading
import time

VIRTUAL_TIME_ENV = "TELEPROBE_VIRTUAL_TIME"


def virtual_time_enabled() -> bool:
    return os.environ.get(VIRTUAL_TIME_ENV, "") not in ("", "0")


class Timer:
    __slots__ = ("when_ms", "fn", "args", "cancelled")

    def __init__(self, when_ms: float, fn, args):
        self.when_ms = when_ms
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class VirtualClock:
    """Discrete-event scheduler; time advances only through run_* calls."""

    def __init__(self, start_ms: float = 0.0):
        self.now_ms = float(start_ms)
        self._heap: list[tuple[float, int, Timer]] = []
        self._counter = itertools.count()

    def call_at(self, when_ms: float, fn, *args) -> Timer:
        if when_ms < self.now_ms:
            when_ms = self.now_ms
        t = Timer(float(when_ms), fn, args)
        heapq.heappush(self._heap, (t.when_ms, next(self._counter), t))
        return t

    def call_later(self, delay_ms: float, fn, *args) -> Timer:
        return self.call_at(self.now_ms + delay_ms, fn, *args)

    def post(self, fn, *args) -> Timer:
        return self.call_at(self.now_ms, fn, *args)

    def _pop_due(self, limit_ms: float) -> Timer | None:
        while self._heap and self._heap[0][0] <= limit_ms:
            _, _, t = heapq.heappop(self._heap)
            if not t.cancelled:
                return t
        return None

    def run_until(self, t_ms: float) -> None:
        """Run all events scheduled up to and including ``t_ms``."""
        while True:
            t = self._pop_due(t_ms)
            if t is None:
                break
            self.now_ms = t.when_ms
            t.fn(*t.args)
        self.now_ms = max(self.now_ms, float(t_ms))

    def run_for(self, dt_ms: float) -> None:
        self.run_until(self.now_ms + dt_ms)

    def run_until_idle(self, limit_ms: float = float("inf")) -> None:
        self.run_until(min(limit_ms, float("inf")))
        while True:
            t = self._pop_due(limit_ms)
            if t is None:
                break
            self.now_ms = t.when_ms
            t.fn(*t.args)

    def pending(self) -> int:
        return sum(1 for _, _, t in self._heap if not t.cancelled)


class RealClock:
    """Wall-clock scheduler: one dispatcher thread runs all callbacks.

    Reader threads hand work over with ``post``; endpoint code therefore
    stays single threaded exactly as under the virtual clock.
    """

    def __init__(self):
        self._t0 = time.monotonic()
        self._heap: list[tuple[float, int, Timer]] = []
        self._counter = itertools.count()
        self._cv = threading.Condition()
        self._stop = False
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    @property
    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def call_at(self, when_ms: float, fn, *args) -> Timer:
        t = Timer(float(when_ms), fn, args)
        with self._cv:
            heapq.heappush(self._heap, (t.when_ms, next(self._counter), t))
            self._cv.notify()
        return t

    def call_later(self, delay_ms: float, fn, *args) -> Timer:
        return self.call_at(self.now_ms + delay_ms, fn, *args)

    def post(self, fn, *args) -> Timer:
        return self.call_at(0.0, fn, *args)  # 0 is always due

    def shutdown(self) -> None:
        with self._cv:
            self._stop = True
            self._cv.notify()
        self._thread.join(timeout=2.0)

    def _run(self) -> None:
        while True:
            with self._cv:
                if self._stop:
                    return
                if not self._heap:
                    self._cv.wait(timeout=0.5)
                    continue
                when, _, t = self._heap[0]
                delay_s = (when - self.now_ms) / 1000.0
                if delay_s > 0:
                    self._cv.wait(timeout=min(delay_s, 0.5))
                    continue
                heapq.heappop(self._heap)
            if not t.cancelled:
                try:
                    t.fn(*t.args)
                except Exception:  # service callbacks must not kill the loop
                    import traceback
                    traceback.print_exc()
