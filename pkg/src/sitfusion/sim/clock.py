from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable, Optional


class SimClock:
    """Discrete-event clock: events run in (time, insertion order)."""

    def __init__(self, now: int = 0):
        self.now = now
        self._queue: list[tuple[int, int, Callable[..., Any], tuple]] = []
        self._seq = itertools.count()

    def schedule(self, at: int, fn: Callable[..., Any], *args: Any) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule in the past: {at} < {self.now}")
        heapq.heappush(self._queue, (at, next(self._seq), fn, args))

    def __len__(self) -> int:
        return len(self._queue)

    def step(self) -> bool:
        if not self._queue:
            return False
        at, _, fn, args = heapq.heappop(self._queue)
        self.now = at
        fn(*args)
        return True

    def run(self, until: Optional[int] = None) -> None:
        """Run events with time <= ``until`` (all of them when ``until`` is None)."""
        while self._queue and (until is None or self._queue[0][0] <= until):
            self.step()
        if until is not None and until > self.now:
            self.now = until
