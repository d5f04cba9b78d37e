"""Tick clocks. All scheduling in the package reads time through one of these."""

from __future__ import annotations

import time


class VirtualClock:
    """Integer tick counter advanced explicitly by the caller. Never sleeps."""

    def __init__(self, start: int = 0):
        self._now = int(start)

    def now(self) -> int:
        return self._now

    __call__ = now

    def advance_to(self, tick: int) -> int:
        tick = int(tick)
        if tick < self._now:
            raise ValueError(f"cannot move clock backwards from {self._now} to {tick}")
        self._now = tick
        return self._now

    def advance(self, ticks: int = 1) -> int:
        return self.advance_to(self._now + ticks)


class WallClock:
    """Ticks derived from the monotonic clock; ``tick_seconds=1.0`` is one tick per second."""

    def __init__(self, tick_seconds: float = 1.0):
        if tick_seconds <= 0:
            raise ValueError("tick_seconds must be positive")
        self.tick_seconds = tick_seconds
        self._t0 = time.monotonic()

    def now(self) -> int:
        return int((time.monotonic() - self._t0) / self.tick_seconds)

    __call__ = now
