"""Injectable clocks.

Timestamps always flow through a clock object so scripted runs and
replays can use deterministic time and produce byte-stable snapshots.
"""

from __future__ import annotations

import time


class SystemClock:
    """Wall clock, for interactive use."""

    def now(self) -> float:
        return time.time()


class TickClock:
    """Deterministic clock: advances a fixed step on every call.

    Scripted benchmark runs use this so that two executions of the same
    script stamp identical times onto identical event sequences.
    """

    def __init__(self, start: float = 1_700_000_000.0, step: float = 1.0):
        self.current = float(start)
        self.step = float(step)

    def now(self) -> float:
        value = self.current
        self.current += self.step
        return value

    def advance(self, delta: float) -> None:
        """Jump forward, e.g. by a tool's scripted duration."""
        self.current += float(delta)


class ManualClock:
    """Clock whose readings are supplied explicitly (fixture generators)."""

    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def set(self, value: float) -> None:
        self.value = float(value)

    def advance(self, delta: float) -> None:
        self.value += float(delta)

    def now(self) -> float:
        return self.value
