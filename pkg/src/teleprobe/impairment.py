"""Link impairment: fixed delay, uniform jitter, telemetry loss.

Stands in for the difference between a local network and a cellular hotspot
path.  Command and control frames are delayed but never dropped or
reordered; only telemetry may be lost.  Jitter saturates instead of
reordering: a frame's dispatch time is the later of its own drawn time and
the previous frame's, so FIFO order holds per direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .protocol import Frame, Imu


@dataclass(frozen=True)
class ImpairmentModel:
    base_delay_ms: float = 0.0
    jitter_ms: float = 0.0
    telemetry_drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.base_delay_ms < 0 or self.jitter_ms < 0:
            raise ValueError("delays must be non-negative")
        if not 0.0 <= self.telemetry_drop_prob < 1.0:
            raise ValueError("telemetry_drop_prob must be in [0, 1)")

    @property
    def is_noop(self) -> bool:
        return (self.base_delay_ms == 0.0 and self.jitter_ms == 0.0
                and self.telemetry_drop_prob == 0.0)


PRESETS: dict[str, ImpairmentModel] = {
    "lan": ImpairmentModel(base_delay_ms=0.5, jitter_ms=0.2,
                           telemetry_drop_prob=0.0),
    "5g": ImpairmentModel(base_delay_ms=20.0, jitter_ms=10.0,
                          telemetry_drop_prob=0.001),
}


def preset(name: str, seed: int = 0) -> ImpairmentModel:
    try:
        base = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown impairment preset {name!r}; "
                       f"known: {sorted(PRESETS)}") from None
    return ImpairmentModel(base.base_delay_ms, base.jitter_ms,
                           base.telemetry_drop_prob, seed)


class ImpairedChannel:
    """Per-direction delay/drop scheduler shared by links and the relay.

    The random draw discipline is fixed (per telemetry frame: one drop draw,
    then one delay draw if kept; per other frame: one delay draw) so two
    channels built from the same model and seed produce identical schedules
    for identical frame sequences regardless of where they sit on the path.
    """

    def __init__(self, model: ImpairmentModel | None):
        self.model = model if model is not None else ImpairmentModel()
        self._rng = (None if self.model.is_noop
                     else np.random.default_rng(self.model.seed))
        self._last_dispatch_ms = -np.inf
        self.dropped = 0

    @property
    def last_dispatch_ms(self) -> float:
        return self._last_dispatch_ms

    def schedule(self, now_ms: float, frame: Frame) -> float | None:
        """Dispatch time for the frame, or None if it is dropped."""
        m = self.model
        if self._rng is None:
            self._last_dispatch_ms = max(now_ms, self._last_dispatch_ms)
            return self._last_dispatch_ms
        if isinstance(frame, Imu) and m.telemetry_drop_prob > 0.0:
            if self._rng.random() < m.telemetry_drop_prob:
                self.dropped += 1
                return None
        delay = m.base_delay_ms
        if m.jitter_ms > 0.0:
            delay += self._rng.uniform(-m.jitter_ms, m.jitter_ms)
        when = now_ms + max(0.0, delay)
        self._last_dispatch_ms = max(when, self._last_dispatch_ms)
        return self._last_dispatch_ms
