"""Clock abstraction so mining and scenario replay can be made deterministic."""

from __future__ import annotations

import time


class SystemClock:
    def now(self) -> int:
        return int(time.time())


class ManualClock:
    """Deterministic clock: each read advances by a fixed tick."""

    def __init__(self, start: int = 1_700_000_000, tick: int = 1):
        self._next = start
        self._tick = tick

    def now(self) -> int:
        value = self._next
        self._next += self._tick
        return value
